"""Batch pipeline: restrict -> matrices -> extract -> seal -> diagnostics -> tightness."""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .algebra import QuadraticModule, VariableSet, parse_polynomial, restrict_module
from .asymptotics import (CARLEMAN_MAX_N, CARLEMAN_THRESHOLD, SplitReport, TightnessCertificate,
                          TightnessVerdict, partial_split, suggest_schedule, summary_csv, tightness)
from .errors import (DescriptorError, IllConditionedError, MomentError, NotFlatError, ParseError,
                     ScheduleIncompleteError)
from .extraction import (ATOM_TOL, ESCALATION, EXACTNESS_TOL, MOMENT_MATCH_TOL, NOISE_FLOOR,
                         ExactnessReport, ExactnessVerdict, check_exactness, check_support, extract,
                         marginal_discrepancy, moment_mismatch, solve_flat)
from .functional import MomentFunctional, functional_from_json
from .matrices import PSD_TOL, RANK_TOL, PsdVerdict, moment_matrix, psd_check
from .measures import MERGE_TOL, AtomicMeasure
from .projective import (ProjectiveFamily, SealedFamily, close_under_union, covering_pairs, save_bundle,
                         well_definedness_audit)

log = logging.getLogger(__name__)

COMMANDS = ("check", "solve", "verify", "report")


class Overall(str, enum.Enum):
    REPRESENTING_MEASURE_CONSTRUCTED = "representing_measure_constructed"
    CONDITIONS_CERTIFIED = "conditions_certified"
    NECESSARY_CONDITION_FAILED = "necessary_condition_failed"
    INCONCLUSIVE = "inconclusive"


EXIT_CODES = {
    Overall.REPRESENTING_MEASURE_CONSTRUCTED: 0,
    Overall.CONDITIONS_CERTIFIED: 0,
    Overall.NECESSARY_CONDITION_FAILED: 2,
    Overall.INCONCLUSIVE: 3,
}

# standard results each verdict rests on, reported for auditability
BASIS = {
    Overall.REPRESENTING_MEASURE_CONSTRUCTED:
        "exact projective system of flat-extension atomic measures + Prokhorov's condition",
    Overall.CONDITIONS_CERTIFIED:
        "partially Archimedean split (Archimedean bounds / Carleman's condition) + Prokhorov's condition",
    Overall.NECESSARY_CONDITION_FAILED:
        "a representing measure forces every moment and localizing matrix to be PSD",
    Overall.INCONCLUSIVE: "no sufficient condition established from the available data",
}


@dataclass(frozen=True)
class Tolerances:
    psd: float = PSD_TOL
    rank: float = RANK_TOL
    rank_escalation: tuple = ESCALATION
    noise_floor: float | None = NOISE_FLOOR
    atom: float | None = ATOM_TOL
    moment_match: float = MOMENT_MATCH_TOL
    exactness: float = EXACTNESS_TOL
    support: float = 1e-9
    merge: float = MERGE_TOL
    carleman_threshold: float = CARLEMAN_THRESHOLD

    @classmethod
    def from_json(cls, data: Mapping | None) -> "Tolerances":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DescriptorError(f"unknown tolerance keys: {sorted(unknown)}")
        if "rank_escalation" in data:
            data["rank_escalation"] = tuple(float(t) for t in data["rank_escalation"])
        for key, value in data.items():
            if key != "rank_escalation" and value is not None and not float(value) > 0:
                raise DescriptorError(f"tolerance {key} must be positive")
        return cls(**data)

    def to_json(self) -> dict:
        out = asdict(self)
        out["rank_escalation"] = list(self.rank_escalation)
        return out


@dataclass
class JobDescriptor:
    functional: MomentFunctional
    module: QuadraticModule
    index_list: list
    degree_budget: int
    epsilon: float = 0.1
    tolerances: Tolerances = field(default_factory=Tolerances)
    command: str = "verify"
    carleman_max_n: int = CARLEMAN_MAX_N
    audit_trials: int = 1000
    schedule: dict | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_json(cls, data: Mapping) -> "JobDescriptor":
        if not isinstance(data, Mapping):
            raise DescriptorError("job descriptor must be a JSON object")
        for key in ("functional", "index_list", "degree_budget"):
            if key not in data:
                raise DescriptorError(f"job descriptor is missing {key!r}")
        L = functional_from_json(data["functional"])
        module = data.get("module", [])
        gens = module.get("generators", []) if isinstance(module, Mapping) else module
        try:
            Q = QuadraticModule(parse_polynomial(g) if isinstance(g, str) else g for g in gens)
        except ParseError as exc:
            raise DescriptorError(f"bad generator: {exc}") from exc
        try:
            index_list = [VariableSet(int(i) for i in F) for F in data["index_list"]]
        except (TypeError, ValueError) as exc:
            raise DescriptorError(f"bad index_list: {exc}") from exc
        if not index_list:
            raise DescriptorError("index_list must be non-empty")
        budget = data["degree_budget"]
        if not isinstance(budget, int) or budget < 1:
            raise DescriptorError("degree_budget must be an integer >= 1")
        epsilon = float(data.get("epsilon", 0.1))
        if not 0 < epsilon < 1:
            raise DescriptorError("epsilon must lie in (0, 1)")
        command = data.get("command", "verify")
        if command not in COMMANDS:
            raise DescriptorError(f"command must be one of {COMMANDS}")
        schedule = data.get("schedule")
        if schedule is not None:
            schedule = {int(k): float(v) for k, v in schedule.items()}
        return cls(L, Q, index_list, budget, epsilon, Tolerances.from_json(data.get("tolerances")), command,
                   int(data.get("carleman_max_n", CARLEMAN_MAX_N)), int(data.get("audit_trials", 1000)),
                   schedule, dict(data))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "JobDescriptor":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DescriptorError(f"cannot read job descriptor {path}: {exc}") from exc
        return cls.from_json(data)


@dataclass
class IndexResult:
    variables: VariableSet
    psd_reports: list = field(default_factory=list)
    necessary_failed: bool = False
    flatness: list = field(default_factory=list)
    flat_order: int | None = None
    rank_tol_used: float | None = None
    measure: Any = None
    measure_source: str | None = None
    extraction_error: str | None = None
    support_ok: bool | None = None
    moment_match: float | None = None
    alternatives: list = field(default_factory=list)
    matrices: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "index": list(self.variables.ids),
            "psd_reports": self.psd_reports,
            "necessary_failed": self.necessary_failed,
            "flatness": [f.to_json() for f in self.flatness],
            "flat_order": self.flat_order,
            "rank_tol_used": self.rank_tol_used,
            "measure_source": self.measure_source,
            "measure": None if self.measure is None else self.measure.to_json(),
            "extraction_error": self.extraction_error,
            "support_ok": self.support_ok,
            "moment_match": self.moment_match,
            "alternatives": self.alternatives,
        }


@dataclass
class PipelineVerdict:
    command: str
    per_index: list
    overall: Overall
    exactness: ExactnessReport | None = None
    tightness: TightnessCertificate | None = None
    split: SplitReport | None = None
    audit_discrepancy: float | None = None
    notes: list = field(default_factory=list)
    family: ProjectiveFamily | None = field(default=None, repr=False)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.overall]

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "overall": self.overall.value,
            "exit_code": self.exit_code,
            "basis": BASIS[self.overall],
            "per_index": [r.to_json() for r in self.per_index],
            "exactness": None if self.exactness is None else self.exactness.to_json(),
            "tightness": None if self.tightness is None else self.tightness.to_json(),
            "split": None if self.split is None else self.split.to_json(),
            "audit_discrepancy": self.audit_discrepancy,
            "tolerances": self.tolerances.to_json(),
            "notes": self.notes,
        }

    def dumps(self) -> str:
        return json.dumps(_finite(self.to_json()), indent=2, sort_keys=True) + "\n"


def _finite(obj):
    """JSON has no inf/nan; encode them as strings."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _finite(obj.item())
    return obj


def _index_seed(seed: int, F: VariableSet) -> int:
    return int(np.random.SeedSequence([seed, len(F), *F.ids]).generate_state(1)[0])


def _matrix_stage(job: JobDescriptor, F: VariableSet, res: IndexResult, keep: bool) -> None:
    L_F = job.functional.restrict(F)
    Q_F = restrict_module(job.module, F)
    top = int(min(job.degree_budget, L_F.available_degree // 2))
    if top < 1:
        raise MomentError(f"moments on {F} do not reach degree 2")
    shifts = [(None, top)]
    for g in Q_F.generators:
        n_g = (2 * top - g.degree) // 2
        if n_g >= 0:
            shifts.append((g, n_g))
    for g, n in shifts:
        M = moment_matrix(L_F, F, n, g)
        rep = psd_check(M, job.tolerances.psd)
        res.psd_reports.append({"shift": "1" if g is None else str(g), "order": n, **rep.to_json()})
        if rep.verdict is PsdVerdict.NOT_PSD:
            res.necessary_failed = True
        if keep:
            res.matrices.append(M)


def _extraction_stage(job: JobDescriptor, F: VariableSet, res: IndexResult, seed: int) -> None:
    tol = job.tolerances
    L_F = job.functional.restrict(F)
    Q_F = restrict_module(job.module, F)
    top = int(min(job.degree_budget, L_F.available_degree // 2))
    kwargs = dict(moment_tol=tol.moment_match, seed=_index_seed(seed, F),
                  noise_floor=tol.noise_floor, atom_tol=tol.atom)
    try:
        sol = solve_flat(L_F, F, top, tol.rank, tol.rank_escalation, **kwargs)
    except (NotFlatError, IllConditionedError) as exc:
        res.extraction_error = str(exc)
        fallback = job.functional.marginal(F)
        if fallback is not None:
            res.measure, res.measure_source = fallback, "closed_form"
    else:
        res.measure, res.measure_source = sol.measure, "extracted"
        res.flatness, res.flat_order, res.rank_tol_used = list(sol.flatness), sol.order, sol.rank_tol
        res.moment_match = moment_mismatch(sol.measure, L_F, 2 * sol.order)
        # a second flat order must give the same measure, otherwise the choice is recorded
        if sol.order + 1 <= top:
            try:
                other = extract(L_F, F, sol.order + 1, rank_tol=sol.rank_tol, **kwargs)
            except MomentError:
                other = None
            if other is not None:
                gap = marginal_discrepancy(sol.measure, other)
                if gap > tol.exactness:
                    res.alternatives.append({"order": sol.order + 1, "discrepancy": gap,
                                             "measure": other.to_json()})
    if isinstance(res.measure, AtomicMeasure):
        res.support_ok = check_support(res.measure, Q_F, tol.support)
        if res.moment_match is None:
            res.moment_match = moment_mismatch(res.measure, L_F, 2 * top)
    elif res.measure is not None and not Q_F.generators:
        res.support_ok = True


def run(job: JobDescriptor, command: str | None = None, seed: int = 0, threads: int = 1,
        keep_matrices: bool = False) -> PipelineVerdict:
    """Execute the pipeline for one job and return the verdict (nothing is written to disk)."""
    command = command or job.command
    if command not in COMMANDS:
        raise DescriptorError(f"unknown command {command!r}")
    index_list = close_under_union(job.index_list)
    notes = []
    if len(index_list) != len({VariableSet(F) for F in job.index_list}):
        notes.append("index list was closed under union")
    results = [IndexResult(F) for F in index_list]

    def per_index(res: IndexResult) -> IndexResult:
        try:
            _matrix_stage(job, res.variables, res, keep_matrices)
        except MomentError as exc:
            exc.stage = exc.stage or "matrices"
            raise
        if command != "check" and not res.necessary_failed:
            try:
                _extraction_stage(job, res.variables, res, seed)
            except MomentError as exc:
                exc.stage = exc.stage or "extract"
                raise
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(per_index, results))
    else:
        results = [per_index(r) for r in results]

    verdict = PipelineVerdict(command, results, Overall.INCONCLUSIVE, notes=notes,
                              tolerances=job.tolerances, seed=seed)
    if any(r.necessary_failed for r in results):
        verdict.overall = Overall.NECESSARY_CONDITION_FAILED
        return verdict
    if command == "check":
        notes.append("check stops after the necessary matrix conditions")
        return verdict

    missing = [r.variables for r in results if r.measure is None]
    if missing:
        notes.append(f"no measure available on {', '.join(map(str, missing))}")
    else:
        family = ProjectiveFamily({r.variables: r.measure for r in results})
        report = check_exactness(family, covering_pairs(family.index_list), job.tolerances.exactness)
        verdict.exactness = report
        if report.verdict is ExactnessVerdict.EXACT:
            verdict.family = SealedFamily(family.measures, report)
        else:
            verdict.family = family
            notes.append("per-index measures do not form an exact system; selection left to the caller")
    if any(r.alternatives for r in results):
        notes.append("some index admits several measures at different flat orders")

    variables = VariableSet(i for F in index_list for i in F)
    try:
        verdict.split = partial_split(job.module, job.functional, variables, job.carleman_max_n,
                                      job.tolerances.carleman_threshold)
    except MomentError as exc:
        exc.stage = exc.stage or "diagnostics"
        raise

    sealed = isinstance(verdict.family, SealedFamily)
    if command == "solve":
        notes.append("solve does not run tightness; use verify for a final verdict")
        return verdict
    if sealed:
        schedule = job.schedule or suggest_schedule(verdict.family, job.epsilon)
        try:
            verdict.tightness = tightness(verdict.family, job.epsilon, schedule)
        except ScheduleIncompleteError as exc:
            notes.append(f"tightness: {exc}")
        verdict.audit_discrepancy = well_definedness_audit(verdict.family, job.audit_trials, seed)

    certified = verdict.tightness is not None and verdict.tightness.verdict is TightnessVerdict.CERTIFIED
    audit_ok = verdict.audit_discrepancy is not None and verdict.audit_discrepancy <= job.tolerances.exactness
    if sealed and certified and audit_ok:
        constructed = all(
            isinstance(r.measure, AtomicMeasure) and r.support_ok
            and r.moment_match is not None and r.moment_match <= job.tolerances.moment_match
            and not r.alternatives
            for r in results)
        if constructed:
            verdict.overall = Overall.REPRESENTING_MEASURE_CONSTRUCTED
        elif verdict.split.hypothesis_satisfied:
            verdict.overall = Overall.CONDITIONS_CERTIFIED
    return verdict


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def render_report(verdict: PipelineVerdict) -> str:
    lines = [f"momentctl {verdict.command}: {verdict.overall.value} (exit {verdict.exit_code})",
             f"  basis: {BASIS[verdict.overall]}", ""]
    for r in verdict.per_index:
        worst = min((p["min_eigenvalue"] for p in r.psd_reports), default=float("nan"))
        lines.append(f"index {r.variables}: {len(r.psd_reports)} PSD checks, "
                     f"{'FAILED' if r.necessary_failed else 'passed'} (smallest eigenvalue {worst:.3g})")
        if r.measure is not None:
            size = f"{len(r.measure)} atoms" if isinstance(r.measure, AtomicMeasure) else r.measure.kind
            order = f" at flat order {r.flat_order}" if r.flat_order else ""
            lines.append(f"    measure: {r.measure_source}{order}, {size}, support_ok={r.support_ok}, "
                         f"moment_match={r.moment_match}")
        if r.extraction_error:
            lines.append(f"    extraction: {r.extraction_error}")
    if verdict.exactness is not None:
        e = verdict.exactness
        lines += ["", f"exactness: {e.verdict.value} over {len(e.pairs_checked)} covering pairs, "
                      f"max discrepancy {e.max_discrepancy:.3g} (tol {e.tolerance:g})"]
    if verdict.split is not None:
        s = verdict.split
        lines += [f"split: G_a={s.archimedean_part} G_c={s.carleman_part} uncovered={s.uncovered}"]
    if verdict.tightness is not None:
        t = verdict.tightness
        masses = ", ".join(f"{F}: {m:.4f}" for F, m in sorted(t.per_index_mass.items(), key=lambda kv: kv[0].key()))
        lines += [f"tightness (eps={t.epsilon}): {t.verdict.value}; box masses {masses}"]
    if verdict.audit_discrepancy is not None:
        lines += [f"well-definedness audit (surrogate): max discrepancy {verdict.audit_discrepancy:.3g}"]
    for note in verdict.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def write_outputs(verdict: PipelineVerdict, out: str | os.PathLike, dump_matrices: bool = False) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "verdict.json", verdict.dumps())
    _atomic_write(out / "report.txt", render_report(verdict))
    if verdict.family is not None:
        save_bundle(verdict.family, out / "family")
    if verdict.command == "report" and verdict.split is not None:
        _atomic_write(out / "summary.csv", summary_csv(verdict.split, verdict.tightness))
    if dump_matrices:
        mdir = out / "matrices"
        mdir.mkdir(exist_ok=True)
        for r in verdict.per_index:
            # localizing matrices are numbered in generator order; the shift is in report.txt
            for k, M in enumerate(r.matrices):
                shift = "moment" if k == 0 else f"loc{k}"
                _atomic_write(mdir / f"{r.variables.label()}_{shift}_n{M.order}.csv", M.to_csv())
    return out
