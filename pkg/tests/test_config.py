import json
import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from masterlab import config as cf
from masterlab.exceptions import ConfigError

TWO_PI = 2 * math.pi


def resolve(**raw):
    return cf.resolve(raw)


class TestSchema:
    def test_minimal(self):
        c = resolve(experiment="purcell-sweep")
        assert c["system"]["omega_q_ghz"] == 5.304
        assert c["sweep"]["kappa_ghz"] == cf.DEFAULT_KAPPA_GRID_GHZ
        assert c["dissipator"] == "redfield-td"

    @pytest.mark.parametrize("raw", [
        {"experiment": "purcell-sweep", "colour": 1},
        {"experiment": "purcell-sweep", "system": {"kappa": 0.1}},
        {"experiment": "purcell-sweep", "propagation": {"rtol": 1e-6}},
        {"experiment": "filter-gain", "spectrum": {"filter": {"omega_f_ghz": 7.5, "gamma_f_ghz": 1, "q": 2}}},
    ])
    def test_unknown_keys(self, raw):
        with pytest.raises(ConfigError, match="invalid config"):
            cf.resolve(raw)

    @pytest.mark.parametrize("raw", [
        {},
        {"experiment": "fig2"},
        {"experiment": "purcell-sweep", "dissipator": "secular"},
        {"experiment": "purcell-sweep", "system": {"kappa_ghz": -1}},
        {"experiment": "purcell-sweep", "system": {"n_trunc": 1}},
        {"experiment": "purcell-sweep", "tag": "a b/c"},
    ])
    def test_invalid_values(self, raw):
        with pytest.raises(ConfigError):
            cf.resolve(raw)

    def test_error_names_path(self):
        with pytest.raises(ConfigError, match="system/kappa_ghz"):
            resolve(experiment="purcell-sweep", system={"kappa_ghz": "fast"})


class TestResolve:
    def test_nbar_expansion(self):
        c = resolve(experiment="driven-sweep", drive={"kind": "rwa"}, system={"kappa_ghz": 1.0},
                    sweep={"nbar_targets": [0, 4]})
        assert c["sweep"]["drive_ghz"] == [0.0, 1.0]
        assert "nbar_targets" not in c["sweep"]

    def test_default_nbar_grid(self):
        c = resolve(experiment="driven-sweep", drive={"kind": "cosine"})
        assert len(c["sweep"]["drive_ghz"]) == len(cf.DEFAULT_NBAR_TARGETS)

    def test_driven_needs_drive(self):
        with pytest.raises(ConfigError, match="drive.kind"):
            resolve(experiment="driven-sweep")

    def test_both_grids(self):
        with pytest.raises(ConfigError, match="either"):
            resolve(experiment="driven-sweep", drive={"kind": "rwa"}, sweep={"nbar_targets": [0], "drive_ghz": [0]})

    def test_monotone_grid(self):
        with pytest.raises(ConfigError, match="monotone"):
            resolve(experiment="driven-sweep", drive={"kind": "rwa"}, sweep={"drive_ghz": [0, 0.2, 0.1]})

    def test_bench_default_drive(self):
        c = resolve(experiment="cavity-bench", system={"kappa_ghz": 0.5})
        assert c["drive"] == {"kind": "rwa", "amplitude_ghz": 0.5}

    def test_filter_required(self):
        with pytest.raises(ConfigError, match="filter"):
            resolve(experiment="filter-gain")

    def test_rabi_vs_jc_flat(self):
        with pytest.raises(ConfigError, match="flat"):
            resolve(experiment="rabi-vs-jc", spectrum={"kind": "ohmic"})

    def test_none_drive_amplitude(self):
        with pytest.raises(ConfigError):
            resolve(experiment="purcell-sweep", drive={"kind": "none", "amplitude_ghz": 0.2})

    def test_filter_replaced_not_merged(self):
        c = resolve(experiment="filter-gain", spectrum={"kind": "ohmic", "filter": {"omega_f_ghz": 7.5, "gamma_f_ghz": 1.0}})
        assert c["spectrum"]["filter"] == {"omega_f_ghz": 7.5, "gamma_f_ghz": 1.0}
        assert c["sweep"]["gamma_f_ghz"] == [1.0]

    @pytest.mark.parametrize("raw", [
        {"experiment": "purcell-sweep", "sweep": {"kappa_ghz": [0.1, 0.5]}},
        {"experiment": "driven-sweep", "drive": {"kind": "cosine"}, "sweep": {"nbar_targets": [0, 1, 9]}},
        {"experiment": "cavity-bench"},
        {"experiment": "filter-gain", "spectrum": {"kind": "ohmic", "filter": {"omega_f_ghz": 7.5, "gamma_f_ghz": 1.5}},
         "drive": {"kind": "cosine"}, "sweep": {"driven": True}},
        {"experiment": "rabi-vs-jc", "secular": 1.0},
    ])
    def test_idempotent(self, raw):
        once = cf.resolve(raw)
        assert cf.resolve(json.loads(json.dumps(once))) == once

    def test_input_not_mutated(self):
        raw = {"experiment": "driven-sweep", "drive": {"kind": "rwa"}, "sweep": {"nbar_targets": [0, 1]}}
        snapshot = json.dumps(raw, sort_keys=True)
        cf.resolve(raw)
        assert json.dumps(raw, sort_keys=True) == snapshot


class TestAmplitudes:
    @given(st.floats(0, 50), st.floats(0.01, 10), st.sampled_from(["cosine", "rwa"]))
    def test_round_trip(self, n, kappa, kind):
        assert cf.amplitude_to_nbar(cf.nbar_to_amplitude(n, kappa, kind), kappa, kind) == pytest.approx(n, abs=1e-9)

    def test_eta_is_twice_eps(self):
        assert cf.nbar_to_amplitude(3, 0.7, "cosine") == pytest.approx(2 * cf.nbar_to_amplitude(3, 0.7, "rwa"))

    def test_errors(self):
        with pytest.raises(ValueError):
            cf.nbar_to_amplitude(-1, 1, "rwa")
        with pytest.raises(ConfigError):
            cf.nbar_to_amplitude(1, 1, "none")


class TestExperimentConfig:
    def test_units(self):
        c = cf.ExperimentConfig.from_dict({"experiment": "rabi-vs-jc", "secular": 2.0, "system": {"kappa_ghz": 0.5}})
        p = c.system_params()
        assert p.kappa == pytest.approx(TWO_PI * 0.5)
        assert p.omega_d == p.omega_r
        assert c.omega_sec == pytest.approx(TWO_PI * 2.0)
        assert c.auto_truncation

    def test_density_kinds(self):
        c = cf.ExperimentConfig.from_dict({"experiment": "filter-gain", "spectrum": {
            "kind": "ohmic", "filter": {"omega_f_ghz": 7.5, "gamma_f_ghz": 1.5}}})
        p = c.system_params()
        assert c.density(p, filtered=False)(p.omega_r) == pytest.approx(p.kappa)
        assert c.density(p).kind == "composed"
        assert c.density(p, gamma_f_ghz=1.0).filter.gamma_f == pytest.approx(TWO_PI * 1.0)

    def test_drive_grid(self):
        c = cf.ExperimentConfig.from_dict({"experiment": "driven-sweep", "drive": {"kind": "rwa"},
                                           "sweep": {"drive_ghz": [0, 0.1]}})
        assert c.drive_grid() == pytest.approx([0, TWO_PI * 0.1])

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            cf.load(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ConfigError, match="not valid JSON"):
            cf.load(bad)
        arr = tmp_path / "arr.json"
        arr.write_text("[1]")
        with pytest.raises(ConfigError, match="object"):
            cf.load(arr)


SHIPPED = sorted((Path(__file__).parents[1] / "configs").glob("*.json"))


@pytest.mark.parametrize("path", SHIPPED, ids=[p.stem for p in SHIPPED])
def test_shipped_configs_validate(path):
    cf.resolve(cf.load(path))
