from pathlib import Path
from typing import Dict, List, Optional, Sequence
import csv
import json
import logging

import numpy as np
from pydantic import ValidationError

from carnot_lab.core.grid import SampledFunction
from carnot_lab.exceptions.custom_exceptions import ArtifactWriteError, ConfigError
from carnot_lab.schemas.report import SuiteSummary, VerificationReport

logger = logging.getLogger(__name__)

TIMING_SUFFIX = ".timing.json"
SUMMARY_NAME = "summary.json"


class ReportRepository:
    """报告、表格与网格转储的文件仓储"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)

    def _ensure_dir(self) -> None:
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactWriteError(f"无法创建输出目录 '{self.output_dir}': {e}")

    def _write_text(self, path: Path, text: str) -> Path:
        self._ensure_dir()
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise ArtifactWriteError(f"无法写入 '{path}': {e}")
        logger.debug(f"写入文件: {path}")
        return path

    def report_path(self, check: str) -> Path:
        return self.output_dir / f"{check}.json"

    def save_report(self, report: VerificationReport) -> Path:
        """
        保存报告

        主文件不含计时信息 (相同配置与种子下逐字节一致), 计时写入旁路文件;
        测量与 report.tables 中的每个表格另存为 CSV。

        Returns:
            Path: 主 JSON 文件路径

        Raises:
            ArtifactWriteError: 写入失败
        """
        path = self._write_text(self.report_path(report.check), report.stable_json() + "\n")
        if report.timing:
            sidecar = self.output_dir / f"{report.check}{TIMING_SUFFIX}"
            self._write_text(sidecar, json.dumps(report.timing, indent=2, sort_keys=True) + "\n")
        self.save_measurements(report)
        for name, rows in report.tables.items():
            if rows:
                self.save_table(f"{report.check}_{name}", list(rows[0]), rows)
        logger.info(f"保存报告: {report.check} -> {path}")
        return path

    def load_report(self, path: Path) -> VerificationReport:
        """
        读取报告 (计时旁路文件存在时一并读回)

        Raises:
            ConfigError: 文件不存在或格式不符
        """
        path = Path(path)
        try:
            report = VerificationReport.model_validate_json(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"报告文件 '{path}' 不存在")
        except ValidationError as e:
            raise ConfigError(f"报告文件 '{path}' 格式错误: {e.error_count()} 处校验失败")
        sidecar = path.with_name(f"{path.stem}{TIMING_SUFFIX}")
        if sidecar.exists():
            report.timing = json.loads(sidecar.read_text(encoding="utf-8"))
        return report

    def list_reports(self) -> List[Path]:
        """输出目录中的报告文件, 按文件名排序"""
        if not self.output_dir.exists():
            return []
        return sorted(
            p
            for p in self.output_dir.glob("*.json")
            if not p.name.endswith(TIMING_SUFFIX) and p.name != SUMMARY_NAME
        )

    def load_all(self) -> Dict[str, VerificationReport]:
        reports = {}
        for path in self.list_reports():
            report = self.load_report(path)
            reports[report.check] = report
        return reports

    def save_summary(self, summary: SuiteSummary) -> Path:
        text = summary.model_dump_json(by_alias=True, indent=2)
        return self._write_text(self.output_dir / SUMMARY_NAME, text + "\n")

    def save_table(self, name: str, columns: Sequence[str], rows) -> Path:
        """
        写出 CSV 表格

        Args:
            name: 文件名 (不含扩展名)
            columns: 列名
            rows: 二维数组或字典序列
        """
        self._ensure_dir()
        path = self.output_dir / f"{name}.csv"
        try:
            with path.open("w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=list(columns))
                writer.writeheader()
                for row in rows:
                    if not isinstance(row, dict):
                        row = dict(zip(columns, (float(v) for v in np.ravel(row))))
                    writer.writerow(row)
        except OSError as e:
            raise ArtifactWriteError(f"无法写入表格 '{path}': {e}")
        return path

    def save_measurements(self, report: VerificationReport) -> Optional[Path]:
        """每个测量一行: label, passed 与所有测得量 (缺失项留空)"""
        if not report.measurements:
            return None
        keys: List[str] = []
        for m in report.measurements:
            keys.extend(k for k in m.values if k not in keys)
        rows = []
        for m in report.measurements:
            row = {"label": m.label, "passed": "" if m.passed is None else str(m.passed).lower()}
            row.update({k: repr(v) for k, v in m.values.items()})
            rows.append(row)
        return self.save_table(f"{report.check}_measurements", ["label", "passed"] + keys, rows)

    def save_grid(self, name: str, f: SampledFunction, slice_axis: Optional[int] = 2) -> Path:
        """网格转储, 并可附带一个中间切片的 CSV"""
        self._ensure_dir()
        path = self.output_dir / f"{name}.grid"
        f.dump(path)
        if slice_axis is not None:
            columns, rows = f.slice_table(slice_axis)
            self.save_table(f"{name}_slice", columns, rows)
        return path
