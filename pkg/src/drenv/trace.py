"""Per-iteration traces with a fixed CSV schema."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

__all__ = ["CSV_HEADER", "IterationRecord", "IterationTrace"]

CSV_HEADER = ("k", "residual", "merit", "gamma", "elapsed_ns")


@dataclass(frozen=True)
class IterationRecord:
    """One row of a trace: iteration, residual, merit value, stepsize, wall time."""

    k: int
    residual: float
    merit: float
    gamma: float
    elapsed_ns: int


@dataclass
class IterationTrace:
    """Append-only record of a solver run.

    Attributes
    ----------
    records : list of IterationRecord
    reason : str
        Termination reason: ``"converged"``, ``"max_iter"`` or
        ``"running"`` while the solver is active.
    meta : dict
        Run parameters (algorithm, gamma, lambda, L, sigma, c, ...).
    final : dict
        Final iterates (``s, u, v`` for DRS, ``x, z, y`` for ADMM).
    """

    records: list = field(default_factory=list)
    reason: str = "running"
    meta: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)

    def append(self, k: int, residual: float, merit: float, gamma: float, elapsed_ns: int) -> None:
        self.records.append(IterationRecord(int(k), float(residual), float(merit),
                                            float(gamma), int(elapsed_ns)))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def merits(self) -> np.ndarray:
        return np.array([r.merit for r in self.records])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    @property
    def min_residual(self) -> float:
        return float(self.residuals.min()) if self.records else float("nan")

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    def summary(self) -> dict:
        return {"iterations": self.iterations, "min_residual": self.min_residual,
                "reason": self.reason}

    def to_csv(self, target: Union[str, os.PathLike, IO[str]]) -> None:
        """Write the trace with header ``k,residual,merit,gamma,elapsed_ns``.

        Floats use ``repr`` formatting, which is locale independent and
        round-trips exactly.
        """
        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", newline="", encoding="ascii") as fh:
                self._write(fh)
        else:
            self._write(target)

    def _write(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow((r.k, repr(r.residual), repr(r.merit), repr(r.gamma), r.elapsed_ns))

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source: Union[str, os.PathLike, IO[str]]) -> "IterationTrace":
        if isinstance(source, (str, os.PathLike)):
            with open(source, newline="", encoding="ascii") as fh:
                return cls.from_csv(fh)
        rows = csv.reader(source)
        header = tuple(next(rows))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        tr = cls()
        for k, res, merit, gamma, ns in rows:
            tr.append(int(k), float(res), float(merit), float(gamma), int(ns))
        return tr
