"""Batched propagation jobs: initial kets, scheduled insertions and recorded readouts.

A job is a set of member runs sharing H, V and the hierarchy. Members are
propagated together in chunks, and every ``stride`` steps the solver records
per member the TLS density matrix, the raw trace and the expectation values
of a list of probe operators. All of this is a pure function of the inputs,
so a run resumed from a checkpoint reproduces an uninterrupted one bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hierarchy import HierarchySpace
from .propagator import (AWFSet, HSEOMPropagator, InsertionEvent, InsertionSchedule, expectation,
                         init_awfs, insert_operator, reduced_density)
from .spin_model import OperatorRep, apply_operator

__all__ = ["Integration", "JobSpec", "JobResult", "JobRunner", "record_stride", "awf_bytes"]


def record_stride(dt: float, interval: float = 0.05) -> int:
    """Steps between records: ``ceil(interval / dt)``, guarded against roundoff."""
    return max(1, math.ceil(interval / dt - 1e-9))


def awf_bytes(n_aux: int, dim: int, batch: int = 1) -> int:
    """Bytes of one AWF set (both branches, complex128)."""
    return 2 * n_aux * batch * dim * 16


@dataclass(frozen=True)
class Integration:
    dt: float
    t_max: float
    stride: int

    def __post_init__(self):
        if not self.dt > 0 or not self.t_max >= 0:
            raise ValueError("need dt > 0 and t_max >= 0")
        n = self.t_max / self.dt
        if abs(n - round(n)) > 1e-6:
            raise ValueError(f"t_max={self.t_max} is not a multiple of dt={self.dt}")
        if self.stride < 1:
            raise ValueError("record stride must be >= 1")

    @classmethod
    def default(cls, dt: float, t_max: float) -> "Integration":
        return cls(dt, t_max, record_stride(dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def record_steps(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.stride)

    @property
    def times(self) -> np.ndarray:
        return self.record_steps * self.dt


@dataclass
class JobSpec:
    name: str
    kets: np.ndarray  # (B, dim), normalized
    weights: np.ndarray  # (B,)
    events: list[InsertionEvent] = field(default_factory=list)
    probes: list[OperatorRep] = field(default_factory=list)

    def __post_init__(self):
        self.kets = np.atleast_2d(np.asarray(self.kets, dtype=np.complex128))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.kets.shape[0]:
            raise ValueError("one weight per member is required")

    @property
    def batch(self) -> int:
        return self.kets.shape[0]


@dataclass
class JobResult:
    times: np.ndarray  # (T,)
    rho_s: np.ndarray  # (T, B, 2, 2)
    trace: np.ndarray  # (T, B)
    probes: np.ndarray  # (T, B, P)

    @classmethod
    def empty(cls, n_times: int, batch: int, n_probes: int, times: np.ndarray) -> "JobResult":
        return cls(times.copy(), np.zeros((n_times, batch, 2, 2), np.complex128),
                   np.zeros((n_times, batch), np.complex128),
                   np.zeros((n_times, batch, n_probes), np.complex128))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"times": self.times, "rho_s": self.rho_s, "trace": self.trace, "probes": self.probes}


class JobRunner:
    """Propagate one job chunk by chunk with resumable state.

    Parameters
    ----------
    propagator : HSEOMPropagator
    job : JobSpec
    integration : Integration
    chunk_size : int
        Members propagated together.
    """

    def __init__(self, propagator: HSEOMPropagator, job: JobSpec, integration: Integration,
                 chunk_size: int | None = None):
        self.prop = propagator
        self.job = job
        self.integ = integration
        self.chunk_size = job.batch if chunk_size is None else max(1, int(chunk_size))
        times = integration.times
        self.result = JobResult.empty(times.size, job.batch, len(job.probes), times)
        self._events_by_step = InsertionSchedule(list(job.events)).by_step(integration.dt, integration.t_max)
        e_ref = np.einsum("bi,bi->b", job.kets.conj(), apply_operator(propagator.H, job.kets)).real
        self._energy_ref = e_ref
        self.chunk_start = 0
        self.awfs: AWFSet | None = None
        self.done = job.batch == 0

    # -- state ---------------------------------------------------------------

    def _start_chunk(self):
        lo = self.chunk_start
        hi = min(lo + self.chunk_size, self.job.batch)
        self.awfs = init_awfs(self.prop.space, self.job.kets[lo:hi], energy_ref=self._energy_ref[lo:hi])
        self._apply_events(0)
        self._record()

    @property
    def chunk_stop(self) -> int:
        return min(self.chunk_start + self.chunk_size, self.job.batch)

    def _apply_events(self, step: int):
        lo, hi = self.chunk_start, self.chunk_stop
        for ev in self._events_by_step.get(step, ()):
            if ev.members is None:
                insert_operator(self.awfs, ev.branch, ev.operator)
                continue
            local = [m - lo for m in ev.members if lo <= m < hi]
            if local:
                insert_operator(self.awfs, ev.branch, ev.operator, local)

    def _record(self):
        step = self.awfs.step
        if step % self.integ.stride:
            return
        r = step // self.integ.stride
        lo, hi = self.chunk_start, self.chunk_stop
        res = self.result
        res.rho_s[r, lo:hi] = reduced_density(self.awfs)
        res.trace[r, lo:hi] = expectation(self.awfs, None)
        for p, op in enumerate(self.job.probes):
            res.probes[r, lo:hi, p] = expectation(self.awfs, op)

    def advance(self, max_steps: int | None = None) -> int:
        """Advance by at most ``max_steps`` steps (all remaining when None); returns steps taken."""
        taken = 0
        n_steps = self.integ.n_steps
        dt = self.integ.dt
        while not self.done:
            if self.awfs is None:
                self._start_chunk()
            while self.awfs.step < n_steps:
                if max_steps is not None and taken >= max_steps:
                    return taken
                self.prop.step(self.awfs, dt)
                taken += 1
                self._apply_events(self.awfs.step)
                self._record()
                if self.awfs.step % (16 * self.integ.stride) == 0:
                    self.prop.check_finite(self.awfs)
            self.prop.check_finite(self.awfs)
            self.chunk_start = self.chunk_stop
            self.awfs = None
            if self.chunk_start >= self.job.batch:
                self.done = True
        return taken

    def run(self) -> JobResult:
        self.advance(None)
        return self.result

    # -- checkpoint support --------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"result.{k}": v for k, v in self.result.arrays().items()}
        if self.awfs is not None:
            out["awfs.data"] = self.awfs.data
            out["awfs.energy_ref"] = self.awfs.energy_ref
        return out

    def state_header(self) -> dict:
        return {
            "chunk_start": self.chunk_start,
            "chunk_size": self.chunk_size,
            "step": None if self.awfs is None else self.awfs.step,
            "done": self.done,
        }

    def restore(self, header: dict, arrays: dict[str, np.ndarray]):
        if header["chunk_size"] != self.chunk_size:
            raise ValueError("checkpoint chunk size differs from the current run")
        self.chunk_start = int(header["chunk_start"])
        self.done = bool(header["done"])
        for k in ("times", "rho_s", "trace", "probes"):
            src = arrays[f"result.{k}"]
            dst = getattr(self.result, k)
            if src.shape != dst.shape:
                raise ValueError(f"checkpoint array result.{k} has shape {src.shape}, expected {dst.shape}")
            dst[...] = src
        if header["step"] is None:
            self.awfs = None
        else:
            step = int(header["step"])
            data = np.ascontiguousarray(arrays["awfs.data"])
            self.awfs = AWFSet(data.copy(), step * self.integ.dt, step, arrays["awfs.energy_ref"].copy())
