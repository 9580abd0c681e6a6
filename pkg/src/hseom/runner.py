"""Experiment orchestration: plan, propagate, checkpoint, post-process, write."""

from __future__ import annotations

import datetime as _dt
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bath import bessel_coefficients
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, ConfigError, load_config
from .hierarchy import enumerate_hierarchy, hierarchy_size
from .io import to_jsonable, write_series
from .observables import (ObservableSeries, fdt_residual, loschmidt, population, spectrum,
                          three_time_correlator, trace_health, two_time_correlator)
from .propagator import HSEOMPropagator, InsertionEvent, normalize
from .simulate import Integration, JobResult, JobRunner, JobSpec, awf_bytes
from .spin_model import (OperatorRep, build_chain_hamiltonian, build_coupling_operator,
                         build_system_hamiltonian, exact_diagonalize)
from .thermal import ThermalComponent, assemble_runs, preparation_report, thermal_components

__all__ = [
    "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_RESOURCE",
    "ResourceError", "memory_estimate", "Experiment",
]

log = logging.getLogger("hseom")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4

# RK4 state plus three stage buffers, plus temporaries while recording
_WORKING_SET_FACTOR = 6


class ResourceError(RuntimeError):
    pass


def memory_estimate(K: int, L: int, n_spins: int) -> int:
    """Bytes of one AWF set: C(K+L, L) * 2^(N+1) amplitudes on two branches."""
    return hierarchy_size(K, L) * 2 ** (n_spins + 1) * 2 * 16


@dataclass
class _JobPlan:
    spec: JobSpec
    integration: Integration
    role: str
    meta: dict


def _sigma_z(n_sites: int, site: int) -> OperatorRep:
    return OperatorRep.single(n_sites, site, "z")


class Experiment:
    """One configured experiment.

    Construction validates resources, prepares the initial states and lays
    out the propagation jobs; :meth:`run` executes them (resumably) and
    :meth:`series` turns the raw records into observable series.
    """

    def __init__(self, config: ExperimentConfig | dict | str, *, checkpoint_path=None):
        self.cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        cfg = self.cfg
        self.checkpoint_path = None if checkpoint_path is None else Path(checkpoint_path)
        s = cfg.system
        budget = int(cfg.resources["memory_budget_gb"] * 2**30)
        self.estimate = memory_estimate(cfg.K, cfg.depth, s.n_spins)
        per_member = _WORKING_SET_FACTOR * self.estimate
        ed_bytes = (2**s.n_spins) ** 2 * 16
        log.info("memory estimate: %d bytes per AWF set (%.3g GB)", self.estimate, self.estimate / 2**30)
        if per_member + ed_bytes > budget:
            raise ResourceError(
                f"memory estimate {self.estimate / 2**30:.3g} GB per AWF set "
                f"({per_member / 2**30:.3g} GB working set, {ed_bytes / 2**30:.3g} GB diagonalization) "
                f"exceeds the budget {budget / 2**30:.3g} GB")
        self.chunk_size = max(1, (budget - ed_bytes) // per_member)
        self.H = build_system_hamiltonian(s)
        self.V = build_coupling_operator(s)
        self.expansion = bessel_coefficients(cfg.bath, cfg.K)
        self.space = enumerate_hierarchy(cfg.K, cfg.depth, cfg.raw["hierarchy"]["max_size"])
        self.propagator = HSEOMPropagator(self.H, self.V, self.expansion, self.space)
        self._prepare_initial()
        self.jobs = self._plan_jobs()
        self.results: list[JobResult | None] = [None] * len(self.jobs)
        self.job_index = 0
        self.runner: JobRunner | None = None

    # -- planning ------------------------------------------------------------

    def _prepare_initial(self):
        cfg = self.cfg
        if cfg.system.n_spins == 0:
            comps = [ThermalComponent(0.0, 0, 0, 1.0, np.ones(1, dtype=np.complex128))]
            self.report = {"n_states": 1, "n_levels": 1, "ground_degeneracy": 1,
                           "retained_states": 1, "retained_weight": 1.0}
        else:
            spec = exact_diagonalize(build_chain_hamiltonian(cfg.system))
            comps = thermal_components(spec, cfg.initial_beta, cfg.retention)
            self.report = preparation_report(spec, cfg.initial_beta, cfg.retention)
        self.components = comps
        self.kets, self.weights = assemble_runs(comps, cfg.tls_state)
        if any(o["kind"] == "loschmidt" for o in cfg.observables) and abs(cfg.tls_state[0] * cfg.tls_state[1]) < 1e-12:
            raise ConfigError("observables: loschmidt needs a TLS state with nonzero coherence")

    def _plan_jobs(self) -> list[_JobPlan]:
        cfg = self.cfg
        integ = cfg.integration
        n_sites = cfg.system.n_sites
        kets, w = self.kets, self.weights
        B = len(w)
        jobs = [_JobPlan(JobSpec("base", kets, w), integ, "base", {})]
        for obs in cfg.observables:
            if obs["kind"] == "correlator":
                j, k = obs["j"], obs["k"]
                sk = _sigma_z(n_sites, k)
                events = [InsertionEvent(0.0, "ket", sk, tuple(range(B))),
                          InsertionEvent(0.0, "bra", sk, tuple(range(B, 2 * B)))]
                spec = JobSpec(f"corr_j{j}_k{k}", np.concatenate([kets, kets]), np.concatenate([w, w]),
                               events, [_sigma_z(n_sites, j)])
                jobs.append(_JobPlan(spec, integ, "correlator", dict(obs)))
            elif obs["kind"] == "three_time":
                i, j, k, tp = obs["i"], obs["j"], obs["k"], float(obs["t_prime"])
                si, sj, sk = (_sigma_z(n_sites, x) for x in (i, j, k))
                n_grid = int(round(tp / obs["insertion_interval"])) + 1
                t_grid = np.round(np.linspace(0.0, tp, n_grid) / integ.dt) * integ.dt
                events = [InsertionEvent(0.0, "ket", sk, None)]
                for g, tg in enumerate(t_grid):
                    events.append(InsertionEvent(float(tg), "ket", sj, tuple(range(g * B, (g + 1) * B))))
                early = JobSpec(f"d_i{i}_j{j}_k{k}_early", np.tile(kets, (n_grid, 1)), np.tile(w, n_grid),
                                events, [si])
                early_integ = Integration(integ.dt, round(tp / integ.dt) * integ.dt, integ.stride)
                jobs.append(_JobPlan(early, early_integ, "three_time_early", {**obs, "t_grid": t_grid}))
                late = JobSpec(f"d_i{i}_j{j}_k{k}_late", kets, w,
                               [InsertionEvent(0.0, "ket", sk, None), InsertionEvent(tp, "bra", si, None)],
                               [sj])
                jobs.append(_JobPlan(late, integ, "three_time_late", dict(obs)))
        return jobs

    @property
    def total_steps(self) -> int:
        return sum(jp.integration.n_steps * math.ceil(jp.spec.batch / self.chunk_size) for jp in self.jobs)

    # -- execution -------------------------------------------------------------

    def _new_runner(self, idx: int) -> JobRunner:
        jp = self.jobs[idx]
        return JobRunner(self.propagator, jp.spec, jp.integration, self.chunk_size)

    def run(self, max_steps: int | None = None) -> bool:
        """Propagate all jobs; returns True when finished, False if stopped after ``max_steps``.

        With a checkpoint path and a positive ``resources.checkpoint_interval``
        the state is saved every that many steps and whenever the run stops early.
        """
        interval = int(self.cfg.resources.get("checkpoint_interval", 0) or 0)
        budget = max_steps
        while self.job_index < len(self.jobs):
            if self.runner is None:
                self.runner = self._new_runner(self.job_index)
                log.info("job %s: %d members", self.jobs[self.job_index].spec.name, self.jobs[self.job_index].spec.batch)
            while not self.runner.done:
                slice_ = interval if (interval > 0 and self.checkpoint_path) else None
                if budget is not None:
                    slice_ = budget if slice_ is None else min(slice_, budget)
                taken = self.runner.advance(slice_)
                if budget is not None:
                    budget -= taken
                if self.runner.done:
                    break
                if self.checkpoint_path is not None:
                    self.save_checkpoint()
                if budget is not None and budget <= 0:
                    return False
            self.results[self.job_index] = self.runner.result
            self.runner = None
            self.job_index += 1
        if self.checkpoint_path is not None:
            self.save_checkpoint()
        return True

    # -- checkpoints -------------------------------------------------------------

    def save_checkpoint(self, path=None):
        path = Path(path) if path is not None else self.checkpoint_path
        if path is None:
            raise ValueError("no checkpoint path configured")
        arrays = {}
        for i, res in enumerate(self.results):
            if res is not None:
                for k, v in res.arrays().items():
                    arrays[f"job{i}.{k}"] = v
        runner_state = None
        if self.runner is not None:
            runner_state = self.runner.state_header()
            for k, v in self.runner.state_arrays().items():
                arrays[f"current.{k}"] = v
        header = {
            "software_version": __version__,
            "config_hash": self.cfg.hash,
            "config": self.cfg.raw,
            "job_index": self.job_index,
            "runner": runner_state,
            "completed": [i for i, r in enumerate(self.results) if r is not None],
        }
        save_checkpoint(path, header, arrays)
        return path

    @classmethod
    def resume(cls, checkpoint_path, config=None) -> "Experiment":
        header, arrays = load_checkpoint(checkpoint_path)
        for key in ("config_hash", "config", "job_index"):
            if key not in header:
                raise CheckpointError(f"checkpoint header lacks {key!r}")
        if config is None:
            cfg = load_config(header["config"])
        else:
            cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        if cfg.hash != header["config_hash"]:
            raise CheckpointError(f"config hash mismatch: checkpoint {header['config_hash']}, "
                                  f"config {cfg.hash}")
        exp = cls(cfg, checkpoint_path=checkpoint_path)
        for i in header.get("completed", []):
            jp = exp.jobs[i]
            res = JobResult.empty(jp.integration.times.size, jp.spec.batch, len(jp.spec.probes),
                                  jp.integration.times)
            for k in ("times", "rho_s", "trace", "probes"):
                getattr(res, k)[...] = arrays[f"job{i}.{k}"]
            exp.results[i] = res
        exp.job_index = int(header["job_index"])
        if header.get("runner") is not None:
            runner = exp._new_runner(exp.job_index)
            sub = {k[len("current."):]: v for k, v in arrays.items() if k.startswith("current.")}
            runner.restore(header["runner"], sub)
            exp.runner = runner
        return exp

    # -- post-processing ---------------------------------------------------------

    def _weighted(self, values: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.tensordot(values, w, axes=([1], [0])) / w.sum()

    def series(self) -> dict[str, ObservableSeries]:
        if any(r is None for r in self.results):
            raise RuntimeError("experiment has not finished")
        cfg = self.cfg
        out: dict[str, ObservableSeries] = {}
        meta = {"config_hash": cfg.hash}
        base = self.results[0]
        w = self.weights
        rho = np.einsum("b,tbij->tij", w, base.rho_s)
        health: list = []
        rho_n = normalize(rho, health)
        t = base.times
        kinds = {o["kind"] for o in cfg.observables}
        out["trace_health"] = trace_health(t, health[0], **meta)
        out["tls_coherence"] = ObservableSeries("Population", t, rho_n[:, 0, 1], {"element": "+-", **meta})
        if "loschmidt" in kinds:
            out["loschmidt_echo"] = loschmidt(t, rho_n, **meta)
        if "population" in kinds:
            out["population_plus"] = population(t, rho_n, "+", **meta)
            out["population_minus"] = population(t, rho_n, "-", **meta)
        B = len(w)
        for idx, jp in enumerate(self.jobs):
            res = self.results[idx]
            if jp.role == "correlator":
                j, k = jp.meta["j"], jp.meta["k"]
                fwd = self._weighted(res.probes[:, :B, 0], w)
                bwd = self._weighted(res.probes[:, B:, 0], w)
                A, C = two_time_correlator(res.times, fwd, bwd, j=j, k=k, **meta)
                out[f"corr_A_j{j}_k{k}"] = A
                out[f"corr_C_j{j}_k{k}"] = C
                sp = jp.meta.get("spectrum")
                if sp is not None:
                    omegas = np.linspace(0.0, sp["omega_max"], sp["n_omega"])
                    X = ObservableSeries("CorrelatorC", res.times, fwd)
                    cs, as_ = spectrum(X, omegas, sp["t_max"], j=j, k=k, **meta)
                    out[f"spectrum_C_j{j}_k{k}"] = cs
                    out[f"spectrum_A_j{j}_k{k}"] = as_
                    out[f"fdt_residual_j{j}_k{k}"] = fdt_residual(cs, as_, cfg.initial_beta,
                                                                  sp["fdt_omega_min"], j=j, k=k, **meta)
            elif jp.role == "three_time_early":
                late = self.results[idx + 1]
                i, j, k, tp = jp.meta["i"], jp.meta["j"], jp.meta["k"], float(jp.meta["t_prime"])
                t_grid = jp.meta["t_grid"]
                n_grid = len(t_grid)
                at_tp = res.probes[-1, :, 0].reshape(n_grid, B)
                d_early = at_tp @ w / w.sum()
                lt = late.times
                mask = lt > tp + 1e-12
                d_late = self._weighted(late.probes[:, :, 0], w)[mask]
                out[f"corr_D_i{i}_j{j}_k{k}"] = three_time_correlator(t_grid, d_early, lt[mask], d_late, tp,
                                                                      i=i, j=j, k=k, **meta)
        return out

    def health(self) -> dict:
        traces = [r.trace for r in self.results if r is not None]
        allt = np.concatenate([np.abs(t).ravel() for t in traces]) if traces else np.zeros(1)
        return {"trace_abs_min": float(allt.min()), "trace_abs_max": float(allt.max())}

    def write_outputs(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        formats = tuple(self.cfg.raw["output"]["formats"])
        written = []
        series = self.series()
        for name, s in series.items():
            written += write_series(directory, name, s, config_hash=self.cfg.hash, formats=formats)
        prep = directory / "preparation.json"
        prep.write_text(json.dumps(to_jsonable(self.report), indent=2, sort_keys=True) + "\n")
        manifest = {
            "software": "hseom",
            "software_version": __version__,
            "config_hash": self.cfg.hash,
            "config": self.cfg.raw,
            "memory_estimate_bytes": self.estimate,
            "hierarchy_size": self.space.size,
            "dimension": self.H.dim,
            "jobs": [{"name": jp.spec.name, "members": jp.spec.batch, "t_max": jp.integration.t_max}
                     for jp in self.jobs],
            "health": self.health(),
            "series": sorted(series),
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        mpath = directory / "manifest.json"
        mpath.write_text(json.dumps(to_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        return written + [prep, mpath]
