"""Command line entry point: ``rlandau verify | run | certify``.

Exit codes
    0  success
    1  missing or invalid configuration, failed verification
    2  step rejected
    3  blow-up
    4  corrupt checkpoint
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import checks, coeff, diagnostics, solver
from .errors import BlowUp, ConfigError, CorruptCheckpoint, StepRejected, ZeroMass

EXIT_OK, EXIT_CONFIG, EXIT_REJECTED, EXIT_BLOWUP, EXIT_CHECKPOINT = 0, 1, 2, 3, 4
SCENARIOS = ("equilibrium", "two-bump", "perturbed-juttner", "custom-checkpoint")

# units and meaning of every key, written as comments by serialize()
_RUN_DOCS = {
    "scenario": "one of " + ", ".join(SCENARIOS),
    "diag_stride": "steps between diagnostics samples (>= 1)",
    "checkpoint_stride": "samples between checkpoints (0 = final only)",
    "output_dir": "directory for diagnostics.csv and checkpoints",
    "seed": "integer seed; picks the perturbation of perturbed-juttner",
    "initial_checkpoint": "path read by the custom-checkpoint scenario",
}
_SOLVER_DOCS = {
    "eps": "regularisation, dimensionless, > 0",
    "radius": "grid half-width in units of m c",
    "n_per_axis": "odd node count per axis",
    "t_end": "final time in collision-time units",
    "dt_init": "largest step, same units as t_end",
    "dt_safety": "fraction of the explicit stability limit, in (0, 1)",
    "scheme": "explicit-euler or rk2",
    "negativity_tol": "accepted f_min / f_max below zero (0 = strict positivity)",
    "use_symmetry": "exploit detected cubic symmetry of f0 (true/false)",
    "max_rejections": "step halvings before giving up",
}


@dataclass
class RunConfig:
    scenario: str = "equilibrium"
    solver: solver.SolverConfig = field(default_factory=solver.SolverConfig)
    diag_stride: int = 1
    output_dir: str = "rlandau_out"
    seed: int = 0
    checkpoint_stride: int = 0
    initial_checkpoint: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("unknown scenario %r" % self.scenario)
        if self.diag_stride < 1:
            raise ConfigError("diag_stride must be >= 1")
        if self.checkpoint_stride < 0:
            raise ConfigError("checkpoint_stride must be >= 0")
        if self.scenario == "custom-checkpoint" and not self.initial_checkpoint:
            raise ConfigError("custom-checkpoint needs initial_checkpoint")


def _convert(kind, raw, key):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError("bad value for %s: %r" % (key, raw)) from exc


def _types(cls):
    hints = {"float": float, "int": int, "str": str, "bool": bool}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__)
            for f in fields(cls)}


def parse_config(text) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cp.sections()) - {"run", "solver"}
    if unknown:
        raise ConfigError("unknown sections: %s" % ", ".join(sorted(unknown)))
    run_types = {k: v for k, v in _types(RunConfig).items() if k != "solver"}
    sol_types = _types(solver.SolverConfig)
    run_kw, sol_kw = {}, {}
    for sec, types, out in (("run", run_types, run_kw), ("solver", sol_types, sol_kw)):
        if not cp.has_section(sec):
            continue
        for key, raw in cp.items(sec):
            if key not in types:
                raise ConfigError("unknown key %s.%s" % (sec, key))
            out[key] = _convert(types[key], raw, key)
    try:
        sol = solver.SolverConfig(**sol_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(solver=sol, **run_kw)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    out = io.StringIO()
    d = asdict(cfg)
    sol = d.pop("solver")
    for name, vals, docs in (("run", d, _RUN_DOCS), ("solver", sol, _SOLVER_DOCS)):
        out.write("[%s]\n" % name)
        for k, v in vals.items():
            out.write("# %s\n%s = %s\n" % (docs[k], k, _fmt(v)))
        out.write("\n")
    return out.getvalue()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc.strerror)) from exc
    return parse_config(text)


def initial_data(cfg: RunConfig):
    s = cfg.solver
    R, n = s.radius, s.n_per_axis
    if cfg.scenario == "equilibrium":
        return solver.juttner(R, n)
    if cfg.scenario == "two-bump":
        return solver.two_bump(R, n)
    if cfg.scenario == "perturbed-juttner":
        rng = np.random.default_rng(cfg.seed)
        wave = rng.uniform(-1.0, 1.0, 3)
        return solver.perturbed_juttner(R, n, 0.1, wave, float(rng.uniform(0, 2 * np.pi)))
    f, _, _ = solver.read_checkpoint(cfg.initial_checkpoint)
    if (f.radius, f.n_per_axis) != (R, n):
        raise ConfigError("checkpoint grid (%g, %d) does not match the solver section"
                          % (f.radius, f.n_per_axis))
    return f


# ---------------------------------------------------------------- commands

def cmd_verify(seed=0, samples=100_000, out=None):
    out = out or sys.stdout
    if samples < 0:
        print("error: --samples must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if samples == 0:
        print("warning: zero samples, nothing checked", file=sys.stderr)
        print("verify seed=%d samples=0: vacuous PASS" % seed, file=out)
        return EXIT_OK
    results = checks.run_suite(seed, samples)
    print("verify seed=%d samples=%d" % (seed, samples), file=out)
    for r in results:
        print(r.line(), file=out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("FAILED: " + "; ".join(failed), file=out)
        return EXIT_CONFIG
    print("all checks passed", file=out)
    return EXIT_OK


def _h_verdict(H):
    d = np.diff(H)
    if len(d) == 0:
        return "single sample"
    if np.all(d < 0):
        return "strictly decreasing"
    if np.all(d <= solver.ENTROPY_ATOL):
        return "nonincreasing within %.0e" % solver.ENTROPY_ATOL
    return "VIOLATED (max rise %.3e)" % d.max()


def cmd_run(config_path, out=None):
    out = out or sys.stdout
    try:
        cfg = load_config(config_path)
        f0 = initial_data(cfg)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except CorruptCheckpoint as exc:
        print("corrupt checkpoint: %s" % exc, file=sys.stderr)
        return EXIT_CHECKPOINT
    os.makedirs(cfg.output_dir, exist_ok=True)
    csv_path = os.path.join(cfg.output_dir, "diagnostics.csv")
    fh = open(csv_path, "w", newline="")
    writer = csv.writer(fh)
    writer.writerow(diagnostics.CSV_COLUMNS)
    count = [0]

    def on_sample(state, rec):
        writer.writerow(rec.csv_row())
        fh.flush()
        count[0] += 1
        if cfg.checkpoint_stride and count[0] % cfg.checkpoint_stride == 0:
            solver.write_checkpoint(
                os.path.join(cfg.output_dir, "checkpoint_%05d.rlnd" % state.step_count),
                state.f, state.t, cfg.solver.eps)

    try:
        traj = solver.run(f0, cfg.solver, diag_stride=cfg.diag_stride,
                          on_sample=on_sample, check_entropy=False)
    except StepRejected as exc:
        print("step rejected: %s" % exc, file=sys.stderr)
        return EXIT_REJECTED
    except BlowUp as exc:
        print("blow-up: %s" % exc, file=sys.stderr)
        return EXIT_BLOWUP
    finally:
        fh.close()
    st = traj.final
    solver.write_checkpoint(os.path.join(cfg.output_dir, "final.rlnd"),
                            st.f, st.t, cfg.solver.eps)
    H = np.array([r.entropy for r in traj.records])
    P0, P1 = traj.records[0].momentum, traj.records[-1].momentum
    print("scenario            %s" % cfg.scenario, file=out)
    print("steps               %d  (t = %.6g)" % (st.step_count, st.t), file=out)
    print("mass error (rel)    %.3e" % traj.mass_error, file=out)
    print("momentum drift      %.3e" % float(np.max(np.abs(P1 - P0))), file=out)
    print("energy vs E0+t eps M %.3e (rel E0)" % traj.energy_identity_error, file=out)
    print("energy vs discrete  %.3e (rel E0)" % traj.discrete_energy_error, file=out)
    print("H drift             %.6e" % (H[-1] - H[0]), file=out)
    print("H monotonicity      %s" % _h_verdict(H), file=out)
    print("csv                 %s" % csv_path, file=out)
    return EXIT_OK


def cmd_certify(checkpoint_path, out=None):
    out = out or sys.stdout
    try:
        f, t, eps = solver.read_checkpoint(checkpoint_path)
    except CorruptCheckpoint as exc:
        print("corrupt checkpoint: %s" % exc, file=sys.stderr)
        return EXIT_CHECKPOINT
    try:
        cert = diagnostics.certificate_constants(f)
    except ZeroMass as exc:
        print("cannot certify: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    print("checkpoint %s  t=%.6g  eps=%.3g  grid %d^3, R=%g"
          % (checkpoint_path, t, eps, f.n_per_axis, f.radius), file=out)
    for name in ("R_cert", "A_cert", "eps0", "eps1", "eps2", "eps3", "eps4",
                 "lower_bound", "log_lower_bound", "eps3_strict", "log_lower_bound_strict"):
        print("%-24s %.6e" % (name, getattr(cert, name)), file=out)
    warn = False
    ln10 = np.log(10.0)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        G = diagnostics.gram_matrix(f, i, j)
        d = float(np.linalg.det(G))
        degenerate = d <= 1e-12 * np.trace(G) ** 3
        margin = (np.log(d) - cert.log_lower_bound) / ln10 if d > 0 else -np.inf
        flag = "  DEGENERATE" if degenerate else ""
        warn |= degenerate or margin <= 0
        print("delta_phi(%d,%d) = %.6e  log10 margin %+.3f%s" % (i + 1, j + 1, d, margin, flag),
              file=out)
    if np.all(f.values > 0):
        audit = diagnostics.check_entropy_theorem(f, eps)
        print("entropy audit: fisher %.6e  D %.6e  C1 %.6e  C2 %.6e  margin %.3e  %s"
              % (audit.fisher, audit.dissipation, audit.C1, audit.C2, audit.margin,
                 "PASS" if audit.passed else "FAIL"), file=out)
        print("certificate constants: log10 C1 %.3f  log10 C2 %.3f"
              % (audit.log10_C1_certificate, audit.log10_C2_certificate), file=out)
    else:
        warn = True
        print("entropy audit skipped: f vanishes at some nodes", file=out)
    if warn:
        print("warning: hypotheses of the determinant bound are not met", file=out)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="rlandau", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="randomised kernel identity suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=100_000)
    r = sub.add_parser("run", help="integrate a scenario from a config file")
    r.add_argument("--config", required=True)
    c = sub.add_parser("certify", help="determinant certificate for a checkpoint")
    c.add_argument("--checkpoint", required=True)
    sub.add_parser("default-config", help="print the default config")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    coeff.set_threads()
    if args.command == "verify":
        return cmd_verify(args.seed, args.samples)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "certify":
        return cmd_certify(args.checkpoint)
    sys.stdout.write(serialize_config(RunConfig()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
