"""Command line pipeline around the synthesis and certification stages.

One config file (a model document extended with run parameters, or a named
fixture) drives: operating point, confidence split, stage-one maxdet
synthesis, stage-two radius minimization, set translation, closed-loop
simulation, support counting with violation levels, and fresh-sample
validation. Certificates and set descriptions are JSON, trajectories CSV;
every artifact carries the config hash, and nothing but run.log carries
wall-clock data, so reruns with the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .casestudies import REGISTRY, build_case
from .confidence import certify, epsilon, epsilon_residual, split_confidence
from .control import (
    REALIZATION_POLICIES,
    simulate,
    translate_invariant_set,
)
from .intervals import (
    ModelFormatError,
    NotSchurStable,
    SingularSystem,
    build_error_model,
    model_from_dict,
    model_to_dict,
    project_operating_point,
    solve_operating_point,
)
from .sampling import STREAM_SP1, STREAM_SP2, EmptyPolytope, sample_batch
from .synthesis import (
    Infeasible,
    LyapunovCertificate,
    NumericalFailure,
    SynthesisError,
    Unbounded,
    build_sp1,
    build_sp2,
    count_support_scenarios,
    solve_sp1,
    solve_sp2,
)
from .validation import empirical_violation, invariance_suite

__all__ = ["main", "RunConfig", "MissingArtifact", "load_config"]

SCHEMA_VERSION = 1
OUTDIR_ENV = "SWITCHLYAP_OUTDIR"

EXIT_CONFIG = 2
EXIT_OPERATING_POINT = 3
EXIT_SAMPLING = 4
EXIT_SP1 = 5
EXIT_SP2 = 6
EXIT_CERTIFY = 7
EXIT_SIMULATE = 8
EXIT_VALIDATE = 9
EXIT_MISSING_ARTIFACT = 10

STAGE_EXIT = {
    "config": EXIT_CONFIG,
    "operating_point": EXIT_OPERATING_POINT,
    "sampling": EXIT_SAMPLING,
    "sp1": EXIT_SP1,
    "sp2": EXIT_SP2,
    "certify": EXIT_CERTIFY,
    "simulate": EXIT_SIMULATE,
    "validate": EXIT_VALIDATE,
}


class MissingArtifact(RuntimeError):
    """A subcommand needs a file another subcommand has not produced yet."""

    def __init__(self, path, producer):
        super().__init__(
            f"missing artifact {path}; run the '{producer}' subcommand first"
        )
        self.path = path
        self.producer = producer


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Resolved run parameters plus the model they apply to."""

    model: object
    lam: np.ndarray
    name: str
    sp1_count: int
    sp2_count: int
    beta: float
    beta_ratio: float
    seed: int
    mu: float
    trace_cap: float | None
    measure: str
    l_interval: str
    steps: int
    policies: tuple
    x0: np.ndarray | None
    x_e_target: np.ndarray | None
    residual_tol: float
    support_strategy: str
    resolve_budget: int | None
    validation_count: int
    invariance_points: int
    invariance_realizations: int
    raw: dict = field(repr=False, default_factory=dict)

    def document(self) -> dict:
        """Serializable resolved config (model document plus run keys)."""
        doc = model_to_dict(self.model, lam=self.lam, residual_tol=self.residual_tol)
        doc["name"] = self.name
        doc["measure"] = self.measure
        if self.x_e_target is not None:
            doc["x_e"] = [float(v) for v in self.x_e_target]
        doc["run"] = {
            "sp1_count": self.sp1_count,
            "sp2_count": self.sp2_count,
            "beta": self.beta,
            "beta_ratio": self.beta_ratio,
            "seed": self.seed,
            "mu": self.mu,
            "trace_cap": self.trace_cap,
            "l_interval": self.l_interval,
            "steps": self.steps,
            "policies": list(self.policies),
            "x0": None if self.x0 is None else [float(v) for v in self.x0],
            "support_strategy": self.support_strategy,
            "resolve_budget": self.resolve_budget,
            "validation_count": self.validation_count,
            "invariance_points": self.invariance_points,
            "invariance_realizations": self.invariance_realizations,
        }
        return doc


_RUN_DEFAULTS = {
    "beta": 0.05,
    "beta_ratio": 0.5,
    "seed": 0,
    "mu": 1e-6,
    "trace_cap": None,
    "l_interval": "endpoint",
    "steps": 1500,
    "policies": ["lower_bound", "upper_bound"],
    "x0": None,
    "support_strategy": "screened",
    "resolve_budget": 64,
    "validation_count": 5000,
    "invariance_points": 1000,
    "invariance_realizations": 200,
}


def _config_from_document(doc: dict, overrides: dict | None = None) -> RunConfig:
    doc = dict(doc)
    run = dict(doc.pop("run", {}))
    for key, val in (overrides or {}).items():
        if val is not None:
            run[key] = val

    fixture = doc.get("fixture") or run.pop("fixture", None)
    if fixture is not None:
        case = build_case(fixture)
        model = case.model
        lam = case.lam
        name = fixture
        defaults = dict(_RUN_DEFAULTS)
        defaults.update(
            sp1_count=case.sp1_count,
            sp2_count=case.sp2_count,
            beta=case.beta,
            trace_cap=case.trace_cap,
        )
        measure = run.get("measure", case.measure)
        x0 = case.x0
        x_e_target = None
    else:
        if "model_file" in doc:
            with open(doc["model_file"]) as fh:
                doc = {**json.load(fh), **{k: v for k, v in doc.items() if k != "model_file"}}
        model, extras = model_from_dict(doc)
        if extras["lambda"] is None:
            raise ModelFormatError("config needs 'lambda' (or a 'fixture' name)")
        lam = np.asarray(extras["lambda"], dtype=float)
        name = doc.get("name") or "model"
        defaults = dict(_RUN_DEFAULTS)
        measure = run.get("measure", extras["measure"])
        x0 = None
        x_e_target = (
            None if extras["x_e"] is None else np.asarray(extras["x_e"], dtype=float)
        )

    def pick(key, cast=None):
        val = run.get(key, defaults.get(key))
        if val is not None and cast is not None:
            val = cast(val)
        return val

    sp1_count = pick("sp1_count", int)
    sp2_count = pick("sp2_count", int)
    if sp1_count is None or sp2_count is None:
        raise ModelFormatError("config needs run.sp1_count and run.sp2_count")
    if sp1_count < 1 or sp2_count < 1:
        raise ModelFormatError("sample counts must be at least 1")
    beta = pick("beta", float)
    if not 0.0 < beta < 1.0:
        raise ModelFormatError("beta must lie in (0, 1)")
    policies = tuple(run.get("policies", defaults["policies"]))
    for p in policies:
        if p not in REALIZATION_POLICIES:
            raise ModelFormatError(
                f"unknown realization policy {p!r}; choose from {REALIZATION_POLICIES}"
            )
    if "x0" in run and run["x0"] is not None:
        x0 = np.asarray(run["x0"], dtype=float)
    elif run.get("x0", "absent") is None:
        x0 = None
    cap = run.get("trace_cap", defaults["trace_cap"])
    budget = run.get("resolve_budget", defaults["resolve_budget"])
    return RunConfig(
        model=model,
        lam=lam,
        name=name,
        sp1_count=sp1_count,
        sp2_count=sp2_count,
        beta=beta,
        beta_ratio=pick("beta_ratio", float),
        seed=pick("seed", int),
        mu=pick("mu", float),
        trace_cap=None if cap is None else float(cap),
        measure=measure,
        l_interval=pick("l_interval", str),
        steps=pick("steps", int),
        policies=policies,
        x0=x0,
        x_e_target=x_e_target,
        residual_tol=float(doc.get("residual_tol", 1e-6)),
        support_strategy=pick("support_strategy", str),
        resolve_budget=None if budget is None else int(budget),
        validation_count=pick("validation_count", int),
        invariance_points=pick("invariance_points", int),
        invariance_realizations=pick("invariance_realizations", int),
        raw=doc,
    )


def load_config(path=None, fixture=None, overrides=None) -> RunConfig:
    """Build a RunConfig from a JSON file or a named fixture."""
    if (path is None) == (fixture is None):
        raise ModelFormatError("give exactly one of a config file or a fixture name")
    if fixture is not None:
        return _config_from_document({"fixture": fixture}, overrides)
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: invalid JSON: {exc}") from None
    return _config_from_document(doc, overrides)


def config_hash(doc: dict) -> str:
    """Hash of the canonical config document; excludes the output directory."""
    trimmed = {k: v for k, v in doc.items() if k != "outdir"}
    blob = json.dumps(trimmed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# artifact io


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


_VOLATILE_KEYS = ("solve_time",)


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {
            k: _strip_volatile(v)
            for k, v in obj.items()
            if k not in _VOLATILE_KEYS
        }
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def write_artifact(outdir, filename, payload: dict, chash: str):
    body = {"schema_version": SCHEMA_VERSION, "config_hash": chash}
    body.update(_strip_volatile(_jsonable(payload)))
    path = os.path.join(outdir, filename)
    with open(path, "w") as fh:
        json.dump(body, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_artifact(outdir, filename, producer):
    path = os.path.join(outdir, filename)
    if not os.path.exists(path):
        raise MissingArtifact(path, producer)
    with open(path) as fh:
        return json.load(fh)


class RunLog:
    """Append-only log; the single artifact that carries timestamps."""

    def __init__(self, outdir):
        self.path = os.path.join(outdir, "run.log")
        self._t0 = time.monotonic()

    def write(self, msg):
        stamp = datetime.now(timezone.utc).isoformat(timespec="milliseconds")
        with open(self.path, "a") as fh:
            fh.write(f"{stamp} +{time.monotonic() - self._t0:8.2f}s {msg}\n")


# ---------------------------------------------------------------------------
# pipeline stages


def _prepare(cfg: RunConfig):
    """Operating point and error dynamics for the configured mixing weights."""
    op = solve_operating_point(cfg.model, cfg.lam, residual_tol=cfg.residual_tol)
    em = build_error_model(cfg.model, op, mode=cfg.l_interval)
    return op, em


def _cert_from_doc(doc: dict) -> LyapunovCertificate:
    return LyapunovCertificate(
        F=np.asarray(doc["F"], dtype=float),
        h=np.asarray(doc["h"], dtype=float),
        W=np.asarray(doc["W"], dtype=float),
        lam=np.asarray(doc["lam"], dtype=float),
        mu=float(doc["mu"]),
        log_det_W=float(doc["log_det_W"]),
        c_range=tuple(doc["c_range"]),
        trace_cap=doc.get("trace_cap"),
        diagnostics=doc.get("diagnostics", {}),
    )


def _synthesize(cfg: RunConfig, em, outdir, chash, log):
    try:
        batch1 = sample_batch(
            em, cfg.sp1_count, cfg.seed, measure=cfg.measure, stream=STREAM_SP1
        )
        batch2 = sample_batch(
            em, cfg.sp2_count, cfg.seed, measure=cfg.measure, stream=STREAM_SP2
        )
    except (EmptyPolytope, ValueError) as exc:
        raise StageError("sampling", exc) from exc

    try:
        sp1 = build_sp1(batch1, cfg.lam, mu=cfg.mu, trace_cap=cfg.trace_cap)
        cert, rep1 = solve_sp1(sp1)
    except SynthesisError as exc:
        raise StageError("sp1", exc) from exc
    log.write(
        f"sp1 solved: status={rep1.solver_status} iters={rep1.iterations}"
        f" time={rep1.solve_time:.2f}s logdetW={cert.log_det_W:.6g}"
    )
    write_artifact(
        outdir,
        "lyapunov.json",
        {
            "F": cert.F,
            "h": cert.h,
            "W": cert.W,
            "lam": cert.lam,
            "mu": cert.mu,
            "log_det_W": cert.log_det_W,
            "c_range": list(cert.c_range),
            "trace_cap": cert.trace_cap,
            "diagnostics": cert.diagnostics,
        },
        chash,
    )

    try:
        sp2 = build_sp2(cert, batch2, mu=cfg.mu)
        inv, rep2 = solve_sp2(sp2)
    except SynthesisError as exc:
        raise StageError("sp2", exc) from exc
    log.write(
        f"sp2 solved: status={rep2.solver_status} iters={rep2.iterations}"
        f" time={rep2.solve_time:.2f}s rho={inv.rho:.6g}"
    )
    write_artifact(
        outdir,
        "invariant_set.json",
        {
            "rho": inv.rho,
            "tau": inv.tau,
            "mu": inv.mu,
            "separation_eig": inv.separation_eig,
            "diagnostics": inv.diagnostics,
        },
        chash,
    )
    return (batch1, batch2), (sp1, sp2), (cert, inv), (rep1, rep2)


def _write_region(cfg: RunConfig, op, cert, rho, outdir, chash):
    region = translate_invariant_set(cert, rho, op.x_e, cfg.x_e_target)
    lo, hi = region.box
    write_artifact(
        outdir,
        "region.json",
        {
            "center": region.ellipsoid.center,
            "shape": region.ellipsoid.shape,
            "semi_axes": region.ellipsoid.semi_axes,
            "rho": rho,
            "x_e_achieved": op.x_e,
            "x_e_target": region.target,
            "target_inside": region.target_inside,
            "box_lower": lo,
            "box_upper": hi,
        },
        chash,
    )
    return region


def _simulate(cfg: RunConfig, em, cert, rho, outdir, chash, log):
    paths = []
    for policy in cfg.policies:
        try:
            traj = simulate(
                em,
                cert,
                rho,
                x0=cfg.x0,
                steps=cfg.steps,
                policy=policy,
                seed=cfg.seed,
            )
        except (ValueError, SynthesisError) as exc:
            raise StageError("simulate", exc) from exc
        path = os.path.join(outdir, f"trajectory_{policy}.csv")
        traj.to_csv(path)
        paths.append(path)
        entry = traj.entry_step
        log.write(
            f"simulate policy={policy}: steps={cfg.steps}"
            f" entry_step={entry} stays_inside={traj.stays_inside_after_entry}"
        )
    return paths


def _certify(cfg: RunConfig, sp_problems, reports, outdir, chash, log):
    sp1, sp2 = sp_problems
    rep1, rep2 = reports
    try:
        sup1 = count_support_scenarios(
            sp1.prog,
            rep1,
            cfg.sp1_count,
            strategy=cfg.support_strategy,
            resolve_budget=cfg.resolve_budget,
        )
        sup2 = count_support_scenarios(
            sp2.prog,
            rep2,
            cfg.sp2_count,
            strategy=cfg.support_strategy,
            resolve_budget=cfg.resolve_budget,
        )
        conf = certify(
            cfg.sp1_count,
            sup1.count,
            cfg.sp2_count,
            sup2.count,
            cfg.beta,
            ratio=cfg.beta_ratio,
            measure=cfg.measure,
            seed=cfg.seed,
            support_methods=(sup1.method, sup2.method),
        )
    except (ValueError, SynthesisError) as exc:
        raise StageError("certify", exc) from exc
    log.write(
        f"certify: support=({sup1.count},{sup2.count})"
        f" methods=({sup1.method},{sup2.method})"
        f" eps=({conf.eps1:.6g},{conf.eps2:.6g})"
    )
    write_artifact(
        outdir,
        "confidence.json",
        {
            "sample_counts": list(conf.sample_counts),
            "support_counts": list(conf.support_counts),
            "support_methods": list(conf.support_methods),
            "beta": conf.beta,
            "beta_shares": list(conf.beta_shares),
            "eps": list(conf.eps),
            "measure": conf.measure,
            "seed": conf.seed,
            "degenerate": conf.degenerate,
            "notes": conf.notes,
            "active_counts": [len(sup1.active), len(sup2.active)],
        },
        chash,
    )
    return conf


def _violation_payload(rep):
    return {
        "tested": rep.tested,
        "violated": rep.violated,
        "by_family": rep.by_family,
        "rate": rep.rate,
        "stderr": rep.stderr,
        "target_eps": rep.target_eps,
        "verdict": rep.verdict,
        "worst_margin": rep.worst_margin,
        "indices": list(rep.indices[:200]),
    }


def _validate(cfg: RunConfig, em, cert, rho, eps, outdir, chash, log):
    try:
        reports = empirical_violation(
            cert,
            em,
            cfg.validation_count,
            cfg.seed,
            measure=cfg.measure,
            rho=rho,
            eps=eps,
        )
        training_batch = sample_batch(
            em, cfg.sp1_count, cfg.seed, measure=cfg.measure, stream=STREAM_SP1
        )
        inv_rep = invariance_suite(
            em,
            cert,
            rho,
            training_batch=training_batch,
            eps2=eps[1],
            seed=cfg.seed,
            points=cfg.invariance_points,
            fresh_realizations=cfg.invariance_realizations,
            measure=cfg.measure,
        )
    except (ValueError, SynthesisError) as exc:
        raise StageError("validate", exc) from exc
    write_artifact(
        outdir,
        "violation.json",
        {
            "fresh_count": cfg.validation_count,
            "stage_one": _violation_payload(reports["stage_one"]),
            "stage_two": _violation_payload(reports["stage_two"]),
        },
        chash,
    )
    write_artifact(
        outdir,
        "invariance.json",
        {
            "points": inv_rep.points,
            "origin_inside": inv_rep.origin_inside,
            "decrease_tested": inv_rep.decrease_tested,
            "decrease_failures": inv_rep.decrease_failures,
            "decrease_worst": inv_rep.decrease_worst,
            "decrease_ok": inv_rep.decrease_ok,
            "closure_tested": inv_rep.closure_tested,
            "closure_failures": inv_rep.closure_failures,
            "closure_worst": inv_rep.closure_worst,
            "closure_rate": inv_rep.closure_rate,
            "closure_budget": inv_rep.closure_budget,
            "closure_ok": inv_rep.closure_ok,
            "entry_fraction": inv_rep.entry_fraction,
            "entry_violations": inv_rep.entry_violations,
            "entry_ok": inv_rep.entry_ok,
            "all_ok": inv_rep.all_ok,
        },
        chash,
    )
    log.write(
        f"validate: rates=({reports['stage_one'].rate:.6g},"
        f"{reports['stage_two'].rate:.6g}) invariance_ok={inv_rep.all_ok}"
    )
    return reports, inv_rep


# ---------------------------------------------------------------------------
# subcommand drivers


def _outdir_from(args) -> str:
    outdir = args.outdir or os.environ.get(OUTDIR_ENV) or "artifacts"
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _load_cfg_for(args) -> RunConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "sp1_count",
            "sp2_count",
            "beta",
            "seed",
            "steps",
            "validation_count",
        )
    }
    return load_config(
        path=getattr(args, "config", None),
        fixture=getattr(args, "fixture", None),
        overrides=overrides,
    )


def _write_config(cfg: RunConfig, outdir) -> str:
    doc = cfg.document()
    chash = config_hash(doc)
    write_artifact(outdir, "config.json", doc, chash)
    return chash


def _stored_context(outdir):
    """Rebuild model, certificates, and hash from serialized artifacts."""
    cfg_doc = read_artifact(outdir, "config.json", "synthesize")
    chash = cfg_doc["config_hash"]
    cfg = _config_from_document(
        {k: v for k, v in cfg_doc.items() if k not in ("schema_version", "config_hash")}
    )
    op, em = _prepare(cfg)
    return cfg, chash, op, em


def cmd_run(args) -> int:
    outdir = _outdir_from(args)
    log = RunLog(outdir)
    try:
        cfg = _load_cfg_for(args)
    except (ModelFormatError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    chash = _write_config(cfg, outdir)
    log.write(f"run start: name={cfg.name} hash={chash}")
    try:
        try:
            op, em = _prepare(cfg)
        except (NotSchurStable, SingularSystem, ValueError) as exc:
            raise StageError("operating_point", exc) from exc
        log.write(f"operating point: x_e={np.array2string(op.x_e, precision=6)}")
        _, sp_problems, (cert, inv), reports = _synthesize(cfg, em, outdir, chash, log)
        _write_region(cfg, op, cert, inv.rho, outdir, chash)
        _simulate(cfg, em, cert, inv.rho, outdir, chash, log)
        conf = _certify(cfg, sp_problems, reports, outdir, chash, log)
        _validate(cfg, em, cert, inv.rho, conf.eps, outdir, chash, log)
    except StageError as exc:
        log.write(f"aborted at stage {exc.stage}: {exc.cause}")
        print(
            f"stage {exc.stage} failed: {exc.cause}\n"
            f"partial artifacts kept in {outdir}",
            file=sys.stderr,
        )
        return STAGE_EXIT[exc.stage]
    log.write("run complete")
    print(f"artifacts written to {outdir}")
    return 0


def cmd_synthesize(args) -> int:
    outdir = _outdir_from(args)
    log = RunLog(outdir)
    try:
        cfg = _load_cfg_for(args)
    except (ModelFormatError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    chash = _write_config(cfg, outdir)
    try:
        try:
            op, em = _prepare(cfg)
        except (NotSchurStable, SingularSystem, ValueError) as exc:
            raise StageError("operating_point", exc) from exc
        _, _, (cert, inv), _ = _synthesize(cfg, em, outdir, chash, log)
        _write_region(cfg, op, cert, inv.rho, outdir, chash)
    except StageError as exc:
        log.write(f"aborted at stage {exc.stage}: {exc.cause}")
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return STAGE_EXIT[exc.stage]
    print(f"certificates written to {outdir}")
    return 0


def _resynthesize_programs(cfg, em):
    """Deterministically rebuild and re-solve both stages from the config."""
    batch1 = sample_batch(
        em, cfg.sp1_count, cfg.seed, measure=cfg.measure, stream=STREAM_SP1
    )
    batch2 = sample_batch(
        em, cfg.sp2_count, cfg.seed, measure=cfg.measure, stream=STREAM_SP2
    )
    sp1 = build_sp1(batch1, cfg.lam, mu=cfg.mu, trace_cap=cfg.trace_cap)
    cert, rep1 = solve_sp1(sp1)
    sp2 = build_sp2(cert, batch2, mu=cfg.mu)
    inv, rep2 = solve_sp2(sp2)
    return (sp1, sp2), (cert, inv), (rep1, rep2)


def cmd_certify(args) -> int:
    outdir = _outdir_from(args)
    log = RunLog(outdir)
    try:
        cfg, chash, _, em = _stored_context(outdir)
        read_artifact(outdir, "lyapunov.json", "synthesize")
        read_artifact(outdir, "invariant_set.json", "synthesize")
    except MissingArtifact as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (ModelFormatError, NotSchurStable, SingularSystem, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        try:
            sp_problems, _, reports = _resynthesize_programs(cfg, em)
        except SynthesisError as exc:
            raise StageError("certify", exc) from exc
        _certify(cfg, sp_problems, reports, outdir, chash, log)
    except StageError as exc:
        log.write(f"aborted at stage {exc.stage}: {exc.cause}")
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return STAGE_EXIT[exc.stage]
    print(f"confidence certificate written to {outdir}")
    return 0


def cmd_simulate(args) -> int:
    outdir = _outdir_from(args)
    log = RunLog(outdir)
    try:
        cfg, chash, op, em = _stored_context(outdir)
        lyap_doc = read_artifact(outdir, "lyapunov.json", "synthesize")
        inv_doc = read_artifact(outdir, "invariant_set.json", "synthesize")
    except MissingArtifact as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (ModelFormatError, NotSchurStable, SingularSystem, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cert = _cert_from_doc(lyap_doc)
    if args.steps:
        cfg.steps = int(args.steps)
    try:
        paths = _simulate(cfg, em, cert, float(inv_doc["rho"]), outdir, chash, log)
    except StageError as exc:
        log.write(f"aborted at stage {exc.stage}: {exc.cause}")
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return STAGE_EXIT[exc.stage]
    print("trajectories written: " + ", ".join(paths))
    return 0


def cmd_validate(args) -> int:
    outdir = _outdir_from(args)
    log = RunLog(outdir)
    try:
        cfg, chash, _, em = _stored_context(outdir)
        lyap_doc = read_artifact(outdir, "lyapunov.json", "synthesize")
        inv_doc = read_artifact(outdir, "invariant_set.json", "synthesize")
        conf_doc = read_artifact(outdir, "confidence.json", "certify")
    except MissingArtifact as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (ModelFormatError, NotSchurStable, SingularSystem, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cert = _cert_from_doc(lyap_doc)
    if args.validation_count:
        cfg.validation_count = int(args.validation_count)
    try:
        reports, inv_rep = _validate(
            cfg,
            em,
            cert,
            float(inv_doc["rho"]),
            tuple(conf_doc["eps"]),
            outdir,
            chash,
            log,
        )
    except StageError as exc:
        log.write(f"aborted at stage {exc.stage}: {exc.cause}")
        print(f"stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return STAGE_EXIT[exc.stage]
    s1, s2 = reports["stage_one"], reports["stage_two"]
    print(
        f"stage one: rate {s1.rate:.6g} vs eps {s1.target_eps:.6g}"
        f" -> {'ok' if s1.verdict else 'VIOLATED'}"
    )
    print(
        f"stage two: rate {s2.rate:.6g} vs eps {s2.target_eps:.6g}"
        f" -> {'ok' if s2.verdict else 'VIOLATED'}"
    )
    print(f"invariance checks: {'ok' if inv_rep.all_ok else 'FAILED'}")
    if s1.verdict and s2.verdict and inv_rep.all_ok:
        return 0
    return EXIT_VALIDATE


def cmd_epsilon(args) -> int:
    try:
        if args.beta is not None:
            share = args.beta
        else:
            share = split_confidence(args.total_beta, args.ratio)[args.stage - 1]
        eps = epsilon(args.n, args.k, share)
        res = epsilon_residual(args.n, args.k, share, eps)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"epsilon = {eps:.12g}")
    print(f"residual = {res:.3e}")
    return 0


def cmd_fixtures(args) -> int:
    if args.list or not args.emit:
        print(f"{'name':<12} {'n':>3} {'modes':>5} {'N':>5} {'M':>5} {'beta':>6} measure")
        for name in sorted(REGISTRY):
            case = build_case(name)
            print(
                f"{name:<12} {case.model.n:>3} {case.model.mode_count:>5}"
                f" {case.sp1_count:>5} {case.sp2_count:>5} {case.beta:>6}"
                f" {case.measure}"
            )
        return 0
    name = args.emit
    try:
        cfg = load_config(fixture=name)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or f"{name}.json"
    with open(out, "w") as fh:
        json.dump(_jsonable(cfg.document()), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, with_model=True):
    if with_model:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="JSON config file (model + run keys)")
        src.add_argument(
            "--fixture", choices=sorted(REGISTRY), help="named case study"
        )
        p.add_argument("--sp1-count", dest="sp1_count", type=int)
        p.add_argument("--sp2-count", dest="sp2_count", type=int)
        p.add_argument("--beta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument(
            "--validation-count", dest="validation_count", type=int
        )
    p.add_argument(
        "--outdir",
        help=f"artifact directory (default ${OUTDIR_ENV} or ./artifacts)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchlyap",
        description=(
            "Synthesis and probabilistic certification of min-switching"
            " control laws for uncertain switched affine systems"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: synthesize, simulate, certify, validate")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synthesize", help="operating point + both scenario programs")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("certify", help="support counting + violation levels from stored artifacts")
    _add_common(p, with_model=False)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="closed-loop runs from stored certificates")
    _add_common(p, with_model=False)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="fresh-sample violation rates + invariance audit")
    _add_common(p, with_model=False)
    p.add_argument("--validation-count", dest="validation_count", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("epsilon", help="violation level for a support count")
    p.add_argument("--n", type=int, required=True, help="sample count")
    p.add_argument("--k", type=int, required=True, help="support count")
    p.add_argument("--beta", type=float, help="confidence share for this stage")
    p.add_argument(
        "--total-beta",
        dest="total_beta",
        type=float,
        help="total budget to split when --beta is not given",
    )
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument(
        "--stage", type=int, choices=(1, 2), default=1,
        help="which share of the split to use",
    )
    p.set_defaults(func=cmd_epsilon)

    p = sub.add_parser("fixtures", help="list case studies or emit one as a config")
    p.add_argument("--list", action="store_true")
    p.add_argument("--emit", metavar="NAME", choices=sorted(REGISTRY))
    p.add_argument("--out", help="output path (default NAME.json)")
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "epsilon" and args.beta is None and args.total_beta is None:
        print("error: give --beta or --total-beta", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
