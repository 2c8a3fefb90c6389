"""Evaluation (ROC AUC, mAUC, bootstrap CIs) and communication accounting."""

from .auc import (
    AucReport,
    UndefinedAucError,
    average_reports,
    bootstrap_ci,
    evaluate_auc,
    mauc,
    roc_auc,
)
from .ledger import MB, CommLedger, Direction, LedgerEntry, LedgerTotals, ledger_totals

__all__ = [
    "MB",
    "AucReport",
    "CommLedger",
    "Direction",
    "LedgerEntry",
    "LedgerTotals",
    "UndefinedAucError",
    "average_reports",
    "bootstrap_ci",
    "evaluate_auc",
    "ledger_totals",
    "mauc",
    "roc_auc",
]
