import json
from pathlib import Path

import numpy as np
import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigError, StabilityError
from app.core.nelder_mead import initial_simplex
from app.core.objectives import POSITIONS, round_positions
from app.core.optimize import OptimizationReport
from app.models.schemas import Method, OptimizationReportModel, RunConfig, SystemSpec
from app.services.bench_service import BenchService
from app.utils.matrix_io import load_basis

SAMPLE = Path(__file__).resolve().parent.parent / "sample_data"
SMALL = {"example": 1, "n": 12}


def _config(**kw):
    data = {"system": SMALL, "c0": [3, 9], "g0": [5.0, 5.0], "max_eval": 200}
    data.update(kw)
    return RunConfig.model_validate(data)


def _report(label, method, positions, gains, total=None, system="example1-n12"):
    return OptimizationReportModel(
        label=label, system=system, method=method, mode="positions", position_objective="rounded",
        n=12, initial_positions=[3, 9], initial_gains=[5.0, 5.0], positions=positions, gains=gains,
        objective=1.0, termination_reason="opt-converged", inner_converged=True, outer_iterations=0,
        dimension=12, full_solves=10, reduced_solves=0,
        timings={} if total is None else {"basis": 0.0, "optimization": total, "total": total},
    )


# ==================== SYSTEMS ====================

def test_build_system_default_desk_size():
    phys, modal = BenchService.build_system(SystemSpec())
    summary = BenchService.summarize(phys, modal)
    assert summary.n == 100
    assert summary.label == "example1-n100"
    assert summary.m == 1 and summary.p == 3
    assert len(summary.c_cols) == 3
    assert 0.0 < summary.omega_min <= summary.omega_max


def test_build_system_example_2():
    _, modal = BenchService.build_system(SystemSpec(example=2, n_row=4))
    assert modal.n == 13
    assert modal.ell == 3


def test_build_system_scale_guard():
    with pytest.raises(ConfigError):
        BenchService.build_system(SystemSpec(example=1, n=600))
    settings = Settings(FULL_SCALE_N=10)
    with pytest.raises(ConfigError):
        BenchService.build_system(SystemSpec(example=1, n=12), settings)
    _, modal = BenchService.build_system(SystemSpec(example=1, n=12, full_scale=True), settings)
    assert modal.n == 12


def test_build_system_from_file():
    spec = SystemSpec(example=None, file=str(SAMPLE / "chain6_system.json"))
    phys, modal = BenchService.build_system(spec)
    assert modal.n == 6
    assert modal.label == "chain6"
    assert modal.alpha == 0.02


def test_build_system_missing_file():
    with pytest.raises(ConfigError):
        BenchService.build_system(SystemSpec(example=None, file="does/not/exist.json"))


# ==================== CONFIGS ====================

def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"system": {"example": 1, "n": 100}, "c0": [5, 9], "g0": [10, 20]}))
    cfg = BenchService.load_config(str(path), {"c0": [2, 5, 8], "system": {"n": 12}, "tol_opt": None})
    assert cfg.c0 == [2, 5, 8]
    assert cfg.g0 == [1000.0] * 3
    assert cfg.system.n == 12 and cfg.system.example == 1
    assert cfg.tol_opt is None

    cfg = BenchService.load_config(str(path), {"system": {"file": str(SAMPLE / "chain6_system.json")}})
    assert cfg.system.example is None


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        BenchService.load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"c0": []}))
    with pytest.raises(ConfigError):
        BenchService.load_config(str(bad))
    with pytest.raises(ConfigError):
        BenchService.load_config(str(SAMPLE / "run_example1_vf.json"), {"method": "full", "basis_out": "b.txt"})


def test_sample_configs_parse():
    for path in sorted(SAMPLE.glob("run_*.json")):
        cfg = BenchService.load_config(str(path))
        assert len(cfg.c0) == len(cfg.g0)


def test_sample_position_starts_leave_their_grid_cell():
    for path in sorted(SAMPLE.glob("run_*.json")):
        cfg = BenchService.load_config(str(path))
        if cfg.mode != POSITIONS:
            continue
        simplex = initial_simplex(np.asarray(cfg.c0, dtype=float))
        for vertex in simplex[1:]:
            assert round_positions(vertex, 10 ** 6) != tuple(cfg.c0), path.name


# ==================== RUNS ====================

def test_execute_full_run():
    report = BenchService.execute(_config())
    assert report.label == "full-positions"
    assert report.method == "full"
    assert report.n == 12
    assert report.system == "example1-n12"


def test_execute_rejects_bad_positions():
    with pytest.raises(ConfigError):
        BenchService.execute(_config(c0=[3, 13]))
    with pytest.raises(ConfigError):
        BenchService.execute(_config(system={**SMALL, "damper_count": 3}))


def test_run_writes_deterministic_results(tmp_path):
    first = BenchService.run(_config(output=str(tmp_path / "a"), label="run one"))
    BenchService.run(_config(output=str(tmp_path / "b"), label="run one"))
    for name in ("results.csv", "trace.csv", "timings.csv", "comparison.csv", "table.txt"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "reports" / "run_one.json").exists()
    results = (tmp_path / "a" / "results.csv").read_bytes()
    assert results == (tmp_path / "b" / "results.csv").read_bytes()
    header = results.decode().splitlines()[0]
    assert "total" not in header and "time" not in header
    assert first.label == "run one"


def test_basis_round_trip(tmp_path):
    stored = tmp_path / "basis.txt"
    first = BenchService.execute(_config(method=Method.VF.value, basis_out=str(stored), tol_err1=0.5))
    assert stored.exists()
    assert load_basis(str(stored), 12).shape == (12, first.dimension)
    second = BenchService.execute(_config(method=Method.VF.value, basis_in=str(stored), tol_err1=0.5))
    assert second.enrichment[0].kind == "import"
    assert second.enrichment[0].dimension == first.dimension


def test_run_flushes_partial_report(tmp_path, monkeypatch):
    def failing(cfg, settings=None):
        exc = StabilityError("reduced operator lost stability")
        exc.partial_report = OptimizationReport("rbm-VF", "positions", "rounded", 12, (3, 9), (5.0, 5.0),
                                                system="example1-n12", dimension=4)
        raise exc

    monkeypatch.setattr(BenchService, "execute", staticmethod(failing))
    with pytest.raises(StabilityError):
        BenchService.run(_config(output=str(tmp_path), label="broken"))
    written = json.loads((tmp_path / "reports" / "broken.json").read_text())
    assert written["dimension"] == 4
    assert written["warnings"][-1].startswith("failed:")


def test_batch_isolates_failures():
    items = BenchService.batch([_config(label="ok"), _config(c0=[3, 30], label="bad")], threads=2)
    assert [i.label for i in items] == ["ok", "bad"]
    assert items[0].success and items[0].report is not None
    assert not items[1].success
    assert items[1].error_type == "ConfigError"
    assert items[1].report is None


# ==================== COMPARISON ====================

def test_compare_identical_runs():
    base = _report("full", "full", [4, 10], [5.0, 5.0], total=2.0)
    same = _report("vf", "rbm-VF", [4, 10], [5.0, 5.0], total=2.0)
    faster = _report("vf-delta", "rbm-delta-VF", [4, 11], [5.0, 5.0], total=0.5)
    (table,) = BenchService.compare([base, same, faster])
    assert table.baseline == "full"
    assert not table.notices
    cols = {c.label: c for c in table.columns}
    assert cols["vf"].error_position == 0.0
    assert cols["vf"].error_gain == 0.0
    assert cols["vf"].acceleration == 1.0
    assert cols["vf-delta"].acceleration == 4.0
    assert cols["vf-delta"].error_position == pytest.approx(1.0 / (16 + 100) ** 0.5)


def test_compare_without_baseline_or_timing():
    (table,) = BenchService.compare([_report("vf", "rbm-VF", [4, 10], [5.0, 5.0], total=1.0)])
    assert table.baseline is None
    assert table.columns[0].error_position is None
    assert table.columns[0].acceleration is None
    assert "no full-order baseline" in table.notices[0]

    (table,) = BenchService.compare([
        _report("full", "full", [4, 10], [5.0, 5.0], total=1.0),
        _report("vf", "rbm-VF", [4, 10], [5.0, 5.0]),
    ])
    assert any("no timing" in note for note in table.notices)


def test_compare_groups_by_system():
    tables = BenchService.compare([
        _report("full", "full", [4, 10], [5.0, 5.0], total=1.0),
        _report("full", "full", [2, 5], [5.0, 5.0], total=1.0, system="chain6"),
    ])
    assert sorted(t.system for t in tables) == ["chain6", "example1-n12"]
