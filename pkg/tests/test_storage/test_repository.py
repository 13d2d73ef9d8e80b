import csv
import json

import numpy as np
import pytest

from carnot_lab.core.grid import SampledFunction
from carnot_lab.exceptions.custom_exceptions import ConfigError
from carnot_lab.schemas.report import SuiteSummary
from carnot_lab.storage.repository import ReportRepository


def _read_csv(path):
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


class TestReportFiles:
    """报告文件测试类"""

    def test_save_and_load(self, repository, sample_report):
        """测试保存后读回 (含计时旁路文件)"""
        path = repository.save_report(sample_report)

        assert path == repository.output_dir / "poincare.json"
        loaded = repository.load_report(path)
        assert loaded == sample_report
        assert loaded.timing == {"seconds": 1.25}

    def test_tables_saved_as_csv(self, repository, sample_report):
        """测试报告中的表格写成 <check>_<name>.csv, 空表不写"""
        sample_report.tables = {"eta": [{"r": 0.1, "eta": 0.5}, {"r": 0.2, "eta": 0.75}], "empty": []}
        repository.save_report(sample_report)

        rows = _read_csv(repository.output_dir / "poincare_eta.csv")
        assert rows == [{"r": "0.1", "eta": "0.5"}, {"r": "0.2", "eta": "0.75"}]
        assert not (repository.output_dir / "poincare_empty.csv").exists()
        assert repository.load_report(repository.output_dir / "poincare.json").tables["eta"][1]["eta"] == 0.75

    def test_main_file_has_no_timing(self, repository, sample_report):
        """测试主文件与计时无关"""
        path = repository.save_report(sample_report)
        first = path.read_bytes()

        sample_report.timing = {"seconds": 99.0}
        repository.save_report(sample_report)
        assert path.read_bytes() == first

        data = json.loads(first)
        assert data["schema"] == 1
        assert "timing" not in data
        sidecar = json.loads((repository.output_dir / "poincare.timing.json").read_text(encoding="utf-8"))
        assert sidecar == {"seconds": 99.0}

    def test_measurements_csv(self, repository, sample_report):
        repository.save_report(sample_report)
        rows = _read_csv(repository.output_dir / "poincare_measurements.csv")
        assert rows == [{"label": "p=2", "passed": "true", "Lambda": "1.5", "c": "0.42"}]

    def test_load_missing(self, repository):
        with pytest.raises(ConfigError):
            repository.load_report(repository.output_dir / "nope.json")

    def test_load_invalid(self, repository):
        """测试格式不符的报告"""
        repository.output_dir.mkdir(parents=True)
        path = repository.output_dir / "broken.json"
        path.write_text('{"check": 3, "status": "maybe"}', encoding="utf-8")
        with pytest.raises(ConfigError):
            repository.load_report(path)


class TestListing:
    """报告列表测试类"""

    def test_missing_directory(self, tmp_path):
        assert ReportRepository(tmp_path / "absent").list_reports() == []

    def test_excludes_sidecars_and_summary(self, repository, sample_report):
        """测试列表不含计时文件与汇总"""
        repository.save_report(sample_report)
        repository.save_report(sample_report.model_copy(update={"check": "main", "timing": {}}))
        repository.save_summary(SuiteSummary(checks={"poincare": "pass"}))

        assert [p.name for p in repository.list_reports()] == ["main.json", "poincare.json"]
        assert set(repository.load_all()) == {"main", "poincare"}
        assert not (repository.output_dir / "main.timing.json").exists()


class TestTablesAndGrids:
    """表格与网格转储测试类"""

    def test_save_table_from_arrays(self, repository):
        path = repository.save_table("fit", ["k", "value"], np.array([[2, 0.5], [4, 0.25]]))
        assert _read_csv(path) == [{"k": "2.0", "value": "0.5"}, {"k": "4.0", "value": "0.25"}]

    def test_save_grid(self, repository, small_grid):
        """测试网格转储可读回并附带切片"""
        f = small_grid.sample(lambda pts: pts[..., 0] + 2.0 * pts[..., 2])
        path = repository.save_grid("demo", f)

        loaded = SampledFunction.load(path)
        assert np.array_equal(loaded.values, f.values)
        rows = _read_csv(repository.output_dir / "demo_slice.csv")
        assert list(rows[0]) == ["x", "y", "value"]
        assert len(rows) == small_grid.shape[0] * small_grid.shape[1]

    def test_save_grid_without_slice(self, repository, small_grid):
        repository.save_grid("bare", small_grid.zeros(), slice_axis=None)
        assert not (repository.output_dir / "bare_slice.csv").exists()
