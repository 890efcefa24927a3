import json
import math

import numpy as np
import pytest

from cola_sdp import scenario as sc
from cola_sdp.scenario import ConfigError


def test_bundled_initial_pc(bundled):
    est = bundled.initial_estimate()
    assert est.pc_closed_form == pytest.approx(1e-5, rel=0.05)
    # calibrated by bisection, so far tighter than the 5% budget
    assert est.pc_closed_form == pytest.approx(1e-5, rel=1e-9)


def test_bundled_geometry_shape(bundled):
    prim, sec = bundled.primary.state, bundled.secondary.state
    alt = np.linalg.norm(prim.position) - bundled.force_model.earth_radius
    assert alt == pytest.approx(550e3, abs=1.0)
    cosang = prim.velocity @ sec.velocity / (np.linalg.norm(prim.velocity) * np.linalg.norm(sec.velocity))
    assert math.degrees(math.acos(cosang)) == pytest.approx(sc.CROSSING_ANGLE_DEG, abs=1e-6)
    assert bundled.model.n_knots == 50
    period = 2 * math.pi * math.sqrt(np.linalg.norm(prim.position) ** 3 / bundled.force_model.mu)
    assert bundled.horizon == pytest.approx(period, rel=1e-3)


def test_bundled_files_regenerate(tmp_path):
    sc.write_bundled(str(tmp_path))
    for name in (sc.BUNDLED_CDM, sc.BUNDLED_CONFIG):
        shipped = (sc.resources.files("cola_sdp") / "data" / name).read_text()
        assert (tmp_path / name).read_text() == shipped


def test_calibration_root_on_large_branch():
    prim, sec = sc.bundled_states()
    shape = np.diag(np.square(sc.SIGMA_RTN_SHAPE_M))
    s = sc.calibrate_covariance_scale(prim, sec, shape)
    lp = sc._log_closed_form_pc(prim, sec, shape * s ** 2, 10.0)
    assert lp == pytest.approx(math.log(1e-5), abs=1e-9)
    # past the peak the Pc falls as the covariance grows
    assert sc._log_closed_form_pc(prim, sec, shape * (1.01 * s) ** 2, 10.0) < lp


def base_values():
    return {"cdm_path": "x.cdm"}


@pytest.mark.parametrize("values, where", [
    ({}, "<root>"),
    ({"cdm_path": "x.cdm", "primary": {}}, "<root>"),
    ({"cdm_path": "x.cdm", "n_knots": 1}, "n_knots"),
    ({"cdm_path": "x.cdm", "target_pc": 2.0}, "target_pc"),
    ({"cdm_path": "x.cdm", "mode": "aggressive"}, "mode"),
    ({"cdm_path": "x.cdm", "colour": "red"}, "<root>"),
    ({"cdm_path": "x.cdm", "dv_caps_mps": []}, "dv_caps_mps"),
])
def test_schema_errors(values, where):
    with pytest.raises(ConfigError, match=where):
        sc.validate_config(values)


def test_defaults_filled():
    out = sc.validate_config(base_values())
    assert out["n_knots"] == 50 and out["alpha"] == 10.0 and out["hard_body_radius_m"] == 10.0
    assert out["baseline_count"] == 100 and out["horizon_revolutions"] == 1.0
    assert "horizon_revolutions" not in sc.validate_config({"cdm_path": "x", "horizon_s": 100.0})


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError, match="config file not found"):
        sc.load_config(str(tmp_path / "nope.json"))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cdm_path": "missing.cdm"}))
    with pytest.raises(ConfigError, match="missing.cdm"):
        sc.load_config(str(cfg))
    cfg.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        sc.load_config(str(cfg))


def inline_entry(obj):
    return {
        "designator": obj.designator,
        "epoch": obj.state.epoch.to_iso(9),
        "position_m": obj.state.position.tolist(),
        "velocity_mps": obj.state.velocity.tolist(),
        "covariance_rtn_m2": obj.position_covariance_rtn.tolist(),
    }


def test_inline_matches_cdm(bundled, tmp_path):
    cfg = tmp_path / "inline.json"
    cfg.write_text(json.dumps({"primary": inline_entry(bundled.primary),
                               "secondary": inline_entry(bundled.secondary)}))
    scn = sc.build_scenario(sc.load_config(str(cfg)))
    a, b = scn.geometry(1e-6), bundled.geometry(1e-6)
    assert np.allclose(a.combined_cov, b.combined_cov, rtol=1e-12)
    assert a.threshold == pytest.approx(b.threshold, rel=1e-12)
    assert scn.initial_estimate().pc_closed_form == pytest.approx(1e-5, rel=1e-6)


def test_overrides_and_digest():
    cfg = sc.load_bundled()
    other = cfg.with_overrides(n_knots=10, target_pc=None)
    assert other["n_knots"] == 10 and other["target_pc"] == cfg["target_pc"]
    assert cfg.digest() == sc.load_bundled().digest()
    assert other.digest() != cfg.digest()
    with pytest.raises(ConfigError):
        cfg.with_overrides(n_knots=0)
