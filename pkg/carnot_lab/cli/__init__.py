from .commands import dump_corpus, merge_reports, run_checks

__all__ = ["dump_corpus", "merge_reports", "run_checks"]
