import numpy as np
import pytest

from carnot_lab.config import RunConfig
from carnot_lab.core.corpus import gauge_bump
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.core.grid import Grid
from carnot_lab.core.model import EllipticMatrix
from carnot_lab.schemas.report import Measurement, VerificationReport
from carnot_lab.storage.repository import ReportRepository


@pytest.fixture
def rng():
    """固定种子的随机数发生器"""
    return np.random.default_rng(1234)


@pytest.fixture
def origin():
    return GroupPoint.origin()


@pytest.fixture
def unit_ball():
    """B(0, 1)"""
    return Ball.at_origin(1.0)


@pytest.fixture
def small_grid(unit_ball):
    """覆盖 B(0, 1) 的粗网格 (每轴 16 个单元)"""
    return Grid.around_ball(unit_ball, 16)


@pytest.fixture
def solver_grid(unit_ball):
    """满足求解器最小分辨率的网格"""
    return Grid.around_ball(unit_ball, 24)


@pytest.fixture
def identity_abar():
    return EllipticMatrix.identity()


@pytest.fixture
def random_abar(rng):
    return EllipticMatrix.random(0.5, rng)


@pytest.fixture
def bump():
    """B(0, 1) 上的规范鼓包"""
    return gauge_bump(1.0)


@pytest.fixture
def repository(tmp_path):
    """临时目录中的报告仓储"""
    return ReportRepository(tmp_path / "reports")


@pytest.fixture
def run_config(tmp_path):
    """写入临时目录的运行配置"""
    return RunConfig(output_dir=str(tmp_path / "reports"), resolution=16)


@pytest.fixture
def sample_report():
    """带测量与计时的示例报告"""
    report = VerificationReport(check="poincare", params={"p_values": [2.0], "cells": 16})
    report.measurements.append(Measurement(label="p=2", values={"Lambda": 1.5, "c": 0.42}, passed=True))
    report.constant = 0.42
    report.timing = {"seconds": 1.25}
    return report
