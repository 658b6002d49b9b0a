"""Pipeline orchestration: stress snapshot in, factor of safety out.

A snapshot (the nodal stress field at one instant) drives the chain
candidates -> coefficients -> LP -> factor of safety + failure pattern.
For time histories the same candidate geometry is reused and only the work
coefficients are refreshed per snapshot, which makes pseudostatic sweeps
cheap relative to a from-scratch solve.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .fem import LoadCase, NewmarkIntegrator, gauss_point_stresses, solve_static
from .recovery import build_smoothing_system, recover_nodal_stresses
from .candidates import Quadrature, compute_coefficients, enumerate_candidates
from .lp import LpSolution, StructurallyStable, assemble_lp, solution_residuals, solve_lp


class AnalysisError(RuntimeError):
    pass


@dataclass
class Snapshot:
    """Nodal stress field at one instant."""

    sigma_n: np.ndarray
    time: float | None = None
    provenance: str = "computed"   # "computed" | "imported"


@dataclass
class VdloOptions:
    threshold: float = 1e-6
    max_length: float | None = None
    quadrature: Quadrature | None = None
    solver: str = "highs"
    exclude_material_crossing: bool = False
    pin_map: dict | None = None


@dataclass
class PatternEntry:
    a: int
    b: int
    slip: float      # |zeta_t|
    opening: float   # zeta_n

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "slip": self.slip, "opening": self.opening}


@dataclass
class VdloResult:
    status: str                      # "failure" | "stable"
    lam: float | None                # factor of safety when status == "failure"
    pattern: list = field(default_factory=list)
    dW_check: float = 0.0
    dE_check: float = 0.0
    residuals: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    solution: LpSolution | None = None
    candidates: list | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "lambda": self.lam,
            "dW": self.dW_check,
            "dE": self.dE_check,
            "pattern": [e.to_dict() for e in self.pattern],
            "timing": self.timing,
        }


def failure_pattern(solution: LpSolution, candidates: list,
                    threshold: float = 1e-6) -> list:
    """Inner candidates slipping above threshold * max slip, sorted by slip.

    With the driving work normalized to one the mechanism cannot be all-zero,
    so an empty maximum indicates an inconsistent solution.
    """
    inner = [i for i, c in enumerate(candidates) if c.kind == "inner"]
    slips = np.abs(solution.zeta[inner, 0])
    max_slip = float(slips.max(initial=0.0))
    if max_slip <= 0.0:
        raise AnalysisError("optimal mechanism has zero slip everywhere; "
                            "solution is internally inconsistent")
    entries = []
    for k, i in enumerate(inner):
        if slips[k] > threshold * max_slip:
            c = candidates[i]
            entries.append(PatternEntry(a=c.a, b=c.b, slip=float(slips[k]),
                                        opening=float(solution.zeta[i, 1])))
    entries.sort(key=lambda e: -e.slip)
    return entries


class SnapshotPipeline:
    """Reusable candidate tables for repeated snapshot solves on one mesh."""

    def __init__(self, mesh: Mesh, options: VdloOptions | None = None):
        self.mesh = mesh
        self.options = options or VdloOptions()
        t0 = _time.perf_counter()
        self.candidates = enumerate_candidates(
            mesh, max_length=self.options.max_length,
            exclude_material_crossing=self.options.exclude_material_crossing,
            quadrature=self.options.quadrature)
        self.tables = compute_coefficients(mesh, self.candidates, self.options.quadrature)
        self.setup_seconds = _time.perf_counter() - t0

    def run(self, snapshot: Snapshot) -> VdloResult:
        mesh = self.mesh
        opts = self.options
        sigma = np.asarray(snapshot.sigma_n, dtype=float)
        if sigma.shape != (len(mesh.nodes), 3):
            raise AnalysisError(f"snapshot shape {sigma.shape} does not match mesh "
                                f"({len(mesh.nodes)} nodes)")
        t0 = _time.perf_counter()
        self.tables.apply(sigma)
        try:
            lp = assemble_lp(mesh, self.candidates, pin_map=opts.pin_map)
        except StructurallyStable:
            return VdloResult(status="stable", lam=None,
                              timing={"solve_s": _time.perf_counter() - t0,
                                      "setup_s": self.setup_seconds},
                              candidates=self.candidates)
        sol = solve_lp(lp, solver=opts.solver)
        timing = {"solve_s": _time.perf_counter() - t0, "setup_s": self.setup_seconds,
                  "lp_rows": lp.eq_matrix.shape[0], "lp_vars": lp.n_vars,
                  "n_candidates": len(self.candidates),
                  "iterations": sol.iterations}
        if sol.status == "infeasible":
            return VdloResult(status="stable", lam=None, timing=timing,
                              candidates=self.candidates)
        res = solution_residuals(self.candidates, len(mesh.nodes), sol)
        pattern = failure_pattern(sol, self.candidates, opts.threshold)
        return VdloResult(status="failure", lam=sol.objective_value, pattern=pattern,
                          dW_check=res["work"], dE_check=res["dissipation"],
                          residuals=res, timing=timing, solution=sol,
                          candidates=self.candidates)


def run_snapshot(mesh: Mesh, snapshot: Snapshot,
                 options: VdloOptions | None = None) -> VdloResult:
    """One-shot analysis of a single stress snapshot."""
    return SnapshotPipeline(mesh, options).run(snapshot)


def limit_quantity(result: VdloResult, applied: float) -> float:
    """Limit load/displacement: the factor of safety times the applied value."""
    if result.status != "failure":
        raise AnalysisError("structure is stable under this snapshot; "
                            "no finite limit quantity exists")
    return result.lam * applied


def run_pseudostatic(mesh: Mesh, load: LoadCase, dt: float, n_steps: int,
                     snapshot_every: int = 1, alpha: float = 0.25, delta: float = 0.5,
                     options: VdloOptions | None = None) -> list:
    """Newmark time stepping with a layout optimization at scheduled steps.

    Returns [(time, VdloResult), ...] ordered by time.  Snapshots are taken
    every ``snapshot_every`` steps (and after the final step).
    """
    integ = NewmarkIntegrator(mesh, load, dt, alpha=alpha, delta=delta)
    smoothing = build_smoothing_system(mesh)
    pipeline = SnapshotPipeline(mesh, options)
    state = integ.initial_state()
    results = []
    for step in range(1, n_steps + 1):
        state = integ.step(state)
        if step % snapshot_every == 0 or step == n_steps:
            sigma_g = gauss_point_stresses(mesh, state)
            sigma_n = recover_nodal_stresses(smoothing, sigma_g)
            result = pipeline.run(Snapshot(sigma_n=sigma_n, time=state.t))
            results.append((state.t, result))
    return results


def static_snapshot(mesh: Mesh, load: LoadCase) -> Snapshot:
    """Solve the static problem and smooth the stresses to the nodes."""
    state = solve_static(mesh, load)
    sigma_g = gauss_point_stresses(mesh, state)
    system = build_smoothing_system(mesh)
    return Snapshot(sigma_n=recover_nodal_stresses(system, sigma_g), time=0.0)
