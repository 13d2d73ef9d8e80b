from .repository import ReportRepository

__all__ = ["ReportRepository"]
