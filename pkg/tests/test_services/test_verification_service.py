import json

import pytest

from carnot_lab.config import RunConfig, current_settings, settings
from carnot_lab.exceptions.custom_exceptions import DomainError, UnknownCheckError
from carnot_lab.services import foundations
from carnot_lab.services.verification_service import CHECK_IDS, VerificationService, summarize
from carnot_lab.schemas.report import VerificationReport


def _report(check: str, status: str = "pass") -> VerificationReport:
    return VerificationReport(check=check, status=status, constant=1.0)


@pytest.fixture
def service(run_config, repository):
    return VerificationService(run_config, repository)


class TestResolve:
    """检查编号解析测试类"""

    def test_all_in_registry_order(self, service):
        assert service.resolve(["all"]) == list(CHECK_IDS)
        assert service.available_checks() == list(CHECK_IDS)

    def test_dedup_keeps_registry_order(self, service):
        """测试重复编号去重并按注册顺序排列"""
        assert service.resolve(["main", "solve", "main", "group-check"]) == ["group-check", "solve", "main"]

    def test_unknown_check(self, service):
        with pytest.raises(UnknownCheckError) as exc_info:
            service.resolve(["solve", "nope"])
        assert "nope" in exc_info.value.detail
        assert exc_info.value.exit_code == 1

    @pytest.mark.parametrize("p_values,expected", [([1.5, 2.0, 3.0], 2.0), ([3.0, 1.5], 3.0)])
    def test_single_p(self, tmp_path, p_values, expected):
        """单个 p 的检查优先取 2"""
        service = VerificationService(RunConfig(p_values=p_values, output_dir=str(tmp_path)))
        assert service._p == expected


class TestRunCheck:
    """单个检查运行测试类"""

    def test_saves_report_with_timing(self, service, repository, mocker):
        mocked = mocker.patch.object(foundations, "group_check", return_value=_report("group-check"))
        report = service.run_check("group-check")

        mocked.assert_called_once()
        assert "seconds" in report.timing
        saved = json.loads((repository.output_dir / "group-check.json").read_text(encoding="utf-8"))
        assert saved["check"] == "group-check"
        assert saved["schema"] == 1
        assert "timing" not in saved
        assert (repository.output_dir / "group-check.timing.json").exists()

    def test_resolution_reaches_check(self, service, mocker):
        """测试分辨率与种子传入检查"""
        mocked = mocker.patch.object(foundations, "solve_check", return_value=_report("solve"))
        service.run_check("solve")
        assert mocked.call_args.kwargs["cells"] == 16

    def test_unknown_check(self, service):
        with pytest.raises(UnknownCheckError):
            service.run_check("nope")

    def test_run_config_scoped_to_check(self, tmp_path, mocker):
        """测试检查内部看到运行配置的求解器设置, 检查之外仍是全局设置"""
        config = RunConfig(output_dir=str(tmp_path), resolution=16, solver_max_iterations=77, seed=5)
        seen = {}

        def fake_solve_check(**kwargs):
            seen["max_iterations"] = current_settings().solver_max_iterations
            seen["seed"] = current_settings().seed
            return _report("solve")

        mocker.patch.object(foundations, "solve_check", side_effect=fake_solve_check)
        before = settings.model_dump()
        VerificationService(config).run_check("solve")

        assert seen == {"max_iterations": 77, "seed": 5}
        assert settings.model_dump() == before
        assert current_settings() is settings

    def test_without_repository(self, run_config, mocker):
        mocker.patch.object(foundations, "group_check", return_value=_report("group-check"))
        report = VerificationService(run_config).run_check("group-check")
        assert report.passed


class TestRunSuite:
    """批量运行测试类"""

    def test_all_pass(self, service, repository, mocker):
        mocker.patch.object(foundations, "group_check", return_value=_report("group-check"))
        mocker.patch.object(foundations, "solve_check", return_value=_report("solve"))
        summary, reports = service.run_suite(["solve", "group-check"])

        assert list(summary.checks) == ["group-check", "solve"]
        assert summary.exit_code == 0
        assert set(reports) == {"group-check", "solve"}
        saved = json.loads((repository.output_dir / "summary.json").read_text(encoding="utf-8"))
        assert saved["checks"] == {"group-check": "pass", "solve": "pass"}

    def test_error_does_not_stop_suite(self, service, mocker):
        """测试单个检查出错时其余检查照常运行"""
        mocker.patch.object(foundations, "group_check", side_effect=DomainError("坏参数"))
        mocker.patch.object(foundations, "solve_check", return_value=_report("solve", "inconclusive"))
        summary, reports = service.run_suite(["group-check", "solve"])

        assert "坏参数" in summary.errors["group-check"]
        assert "group-check" not in summary.checks
        assert summary.inconclusive == ["solve"]
        assert list(reports) == ["solve"]
        assert summary.exit_code == 1

    def test_inconclusive_exit_code(self, service, mocker):
        mocker.patch.object(foundations, "solve_check", return_value=_report("solve", "inconclusive"))
        summary, _ = service.run_suite(["solve"])
        assert summary.exit_code == 2

    def test_failed_exit_code(self, service, mocker):
        mocker.patch.object(foundations, "solve_check", return_value=_report("solve", "fail"))
        mocker.patch.object(foundations, "group_check", return_value=_report("group-check", "inconclusive"))
        summary, _ = service.run_suite(["solve", "group-check"])
        assert summary.failed == ["solve"]
        assert summary.exit_code == 1

    def test_parallel_order_is_stable(self, tmp_path, mocker):
        """测试多线程下汇总仍按注册顺序排列"""
        config = RunConfig(output_dir=str(tmp_path), resolution=16, workers=4)
        for name, check in [("group_check", "group-check"), ("calculus_check", "calculus-check"), ("solve_check", "solve")]:
            mocker.patch.object(foundations, name, return_value=_report(check))
        summary, _ = VerificationService(config).run_suite(["solve", "calculus-check", "group-check"])
        assert list(summary.checks) == ["group-check", "calculus-check", "solve"]


class TestSummarize:
    """由报告重建汇总测试类"""

    def test_summarize(self):
        reports = {
            "main": _report("main", "fail"),
            "custom": _report("custom"),
            "solve": _report("solve", "inconclusive"),
        }
        summary = summarize(reports)
        assert list(summary.checks) == ["solve", "main", "custom"]
        assert summary.failed == ["main"]
        assert summary.inconclusive == ["solve"]
        assert summary.exit_code == 1

    def test_empty(self):
        assert summarize({}).exit_code == 0
