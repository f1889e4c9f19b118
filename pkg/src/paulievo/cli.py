"""Batch experiment runner: configuration, subcommands, CSV artifacts.

Subcommands: ``run-itpp`` (sparse propagation), ``exact`` (dense reference
curves), ``bdg`` (free-fermion ground energies), ``sweep`` (one run per
point of an axis), ``resume`` (continue from a checkpoint).

Configuration is a flat INI file (sections ``model`` / ``schedule`` /
``truncation`` / ``output`` / ``run``); every key can be overridden by the
command-line flag of the same name.  All trajectory CSVs carry a versioned
schema header and state the time convention: the tau column is the
accumulated imaginary time, equal to the inverse temperature of the
approximated thermal state.  Pipelines are deterministic; rerunning a
command reproduces its CSV byte for byte apart from the wall-time column.

The environment variable ``PAULIEVO_WORKERS`` is reserved for worker-count
hints and is recorded in summaries; it never affects numerical results.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .models import Hamiltonian, TfimParams, build_tfim, hamiltonian_from_file
from .opsum import (
    FixedK,
    PauliSum,
    Threshold,
    TraceCollapseError,
    WeightCutoff,
    load_pauli_sum,
    save_pauli_sum,
)
from .oracle import (
    SizeGuardError,
    bdg_ground_energy,
    dense_exact_ite,
    dense_trotter_ite,
    ground_energy,
)
from .propagate import ScheduleConfig, Trajectory, run_itpp

SCHEMA_TRAJECTORY = "itpp-trajectory v1"
SCHEMA_SUMMARY = "itpp-summary v1"
SCHEMA_SWEEP = "itpp-sweep v1"
TAU_CONVENTION = (
    "accumulated tau equals the inverse temperature beta; "
    "state ~ exp(-tau*H)"
)

CONFIG_SECTIONS = {
    "model": ("kind", "N", "J", "h", "terms_file"),
    "schedule": ("delta_tau", "tau_final"),
    "truncation": ("truncation",),
    "output": ("out_dir", "checkpoint_every"),
    "run": ("observables", "record_per_gate", "stop_after_step",
            "dense_guard"),
}


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    """Parse a float, accepting power notation like ``2^-7`` or ``2**-7``."""
    text = text.strip()
    for sep in ("**", "^"):
        if sep in text:
            base, _, exp = text.partition(sep)
            return float(base) ** float(exp)
    return float(text)


def parse_policy(spec: str):
    """Parse a truncation spec: ``none``, ``threshold=DELTA``,
    ``fixed_k=K``, ``weight=W``, or a comma-separated combination applied
    in order."""
    spec = spec.strip()
    if spec.lower() in ("", "none"):
        return None
    policies = []
    for part in spec.split(","):
        name, _, value = part.partition("=")
        name = name.strip().lower()
        if not value:
            raise ConfigError(f"truncation part {part!r} needs a value")
        if name == "threshold":
            policies.append(Threshold(parse_number(value)))
        elif name == "fixed_k":
            policies.append(FixedK(int(parse_number(value))))
        elif name == "weight":
            policies.append(WeightCutoff(int(parse_number(value))))
        else:
            raise ConfigError(f"unknown truncation kind {name!r}")
    return policies[0] if len(policies) == 1 else policies


def policy_text(policy) -> str:
    if policy is None:
        return "none"
    if isinstance(policy, (list, tuple)):
        return ",".join(policy_text(p) for p in policy)
    if isinstance(policy, Threshold):
        return f"threshold={policy.delta!r}"
    if isinstance(policy, FixedK):
        return f"fixed_k={policy.k}"
    if isinstance(policy, WeightCutoff):
        return f"weight={policy.max_weight}"
    raise TypeError(f"unknown policy {policy!r}")


@dataclass
class RunConfig:
    """Everything one propagation run needs; all fields deterministic."""

    kind: str = "tfim"
    N: int = 10
    J: float = 1.0
    h: float = 0.5
    terms_file: str = ""
    delta_tau: float = 0.04
    tau_final: float = 10.0
    truncation: str = "none"
    observables: str = ""
    out_dir: str = "itpp-run"
    checkpoint_every: int = 0
    record_per_gate: bool = False
    stop_after_step: int = 0
    dense_guard: int = 14

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(delta_tau=self.delta_tau,
                              tau_final=self.tau_final)

    def policy(self):
        return parse_policy(self.truncation)

    def hamiltonian(self) -> Hamiltonian:
        if self.kind == "tfim":
            return build_tfim(TfimParams(N=self.N, J=self.J, h=self.h))
        if self.kind == "terms":
            if not self.terms_file:
                raise ConfigError("model kind 'terms' needs terms_file")
            return hamiltonian_from_file(self.terms_file)
        raise ConfigError(f"unknown model kind {self.kind!r}")

    def model_text(self) -> str:
        if self.kind == "tfim":
            return f"tfim N={self.N} J={self.J!r} h={self.h!r}"
        return f"terms file={self.terms_file}"

    def observable_sums(self, n_qubits: int) -> list[tuple[str, PauliSum]]:
        out = []
        for text in filter(None, (s.strip() for s in
                                  self.observables.split(","))):
            out.append((text, PauliSum.from_terms(n_qubits, [(1.0, text)])))
        return out


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(value)
    if target_type is float:
        return parse_number(value)
    return value


def load_config_file(path: str) -> dict:
    """Read the INI config into a flat ``{field: string}`` dict."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys like N and J are case-sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    flat = {}
    for section, keys in CONFIG_SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in keys:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]"
                )
            flat[key] = value
    return flat


_FIELD_TYPES = {
    "kind": str, "N": int, "J": float, "h": float, "terms_file": str,
    "delta_tau": float, "tau_final": float, "truncation": str,
    "observables": str, "out_dir": str, "checkpoint_every": int,
    "record_per_gate": bool, "stop_after_step": int, "dense_guard": int,
}


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config-file values, then explicit CLI flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, raw in load_config_file(args.config).items():
            cfg = replace(cfg, **{key: _coerce(raw, _FIELD_TYPES[key])})
    for key in _FIELD_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            cfg = replace(cfg, **{key: val})
    return cfg


def write_config_echo(cfg: RunConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section, keys in CONFIG_SECTIONS.items():
        parser.add_section(section)
        for key in keys:
            parser.set(section, key, str(getattr(cfg, key)))
    with open(path, "w") as f:
        parser.write(f)


def read_config_echo(path: str) -> RunConfig:
    flat = load_config_file(path)
    cfg = RunConfig()
    for key, raw in flat.items():
        cfg = replace(cfg, **{key: _coerce(raw, _FIELD_TYPES[key])})
    return cfg


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def reference_for(cfg: RunConfig, hamiltonian: Hamiltonian):
    """Ground-energy reference for the relative-error column.

    Exact diagonalization inside the dense guard, the free-fermion solution
    beyond it (TFIM only); generic models beyond the guard get no reference.
    """
    if hamiltonian.n_qubits <= cfg.dense_guard:
        return ground_energy(hamiltonian, max_qubits=cfg.dense_guard), "ed"
    if cfg.kind == "tfim":
        return bdg_ground_energy(TfimParams(N=cfg.N, J=cfg.J, h=cfg.h)), "bdg"
    return None, "none"


def trajectory_header(cfg: RunConfig, reference, ref_source,
                      obs_labels) -> list[str]:
    lines = [
        f"# schema: {SCHEMA_TRAJECTORY}",
        f"# tau_convention: {TAU_CONVENTION}",
        f"# model: {cfg.model_text()}",
        f"# delta_tau: {_fmt(cfg.delta_tau)}",
        f"# tau_final: {_fmt(cfg.tau_final)}",
        f"# policy: {policy_text(cfg.policy())}",
        f"# reference_energy: {_fmt(reference)} (source: {ref_source})",
    ]
    cols = ["tau", "energy", "rel_error", "n_terms", "purity", "wall_time_s"]
    cols += [f"obs:{label}" for label in obs_labels]
    lines.append(",".join(cols))
    return lines


def record_row(record) -> str:
    cells = [
        _fmt(record.tau),
        _fmt(record.energy),
        _fmt(record.relative_error),
        str(record.n_terms),
        _fmt(record.purity),
        _fmt(record.wall_time_s),
    ]
    cells += [_fmt(v) for v in record.observable_values]
    return ",".join(cells)


def write_summary(path: str, entries: dict) -> None:
    with open(path, "w") as f:
        f.write(f"schema = {SCHEMA_SUMMARY}\n")
        for key, value in entries.items():
            f.write(f"{key} = {_fmt(value)}\n")


def _atomic_checkpoint(state: PauliSum, path: str, extras: dict) -> None:
    tmp = path + ".tmp"
    save_pauli_sum(state, tmp, extras)
    os.replace(tmp, path)


def run_single(cfg: RunConfig, *, resume_from=None) -> dict:
    """Execute one propagation run and write its artifacts.

    Returns the summary dict.  ``resume_from`` is ``(state, start_step,
    kept_rows)`` when continuing from a checkpoint.
    """
    hamiltonian = cfg.hamiltonian()
    schedule = cfg.schedule()
    policy = cfg.policy()
    reference, ref_source = reference_for(cfg, hamiltonian)
    obs = cfg.observable_sums(hamiltonian.n_qubits)

    os.makedirs(cfg.out_dir, exist_ok=True)
    write_config_echo(cfg, os.path.join(cfg.out_dir, "config.ini"))
    traj_path = os.path.join(cfg.out_dir, "trajectory.csv")
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.psum")

    initial_state = None
    start_step = 0
    kept_rows: list[str] = []
    if resume_from is not None:
        initial_state, start_step, kept_rows = resume_from

    stopped = {"flag": False}
    max_terms = {"value": 1 if initial_state is None else len(initial_state)}
    for row in kept_rows:
        cells = row.split(",")
        if len(cells) > 3 and cells[3]:
            max_terms["value"] = max(max_terms["value"], int(cells[3]))

    def callback(step, state, record):
        max_terms["value"] = max(max_terms["value"], record.n_terms)
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            _atomic_checkpoint(state, ckpt_path,
                               {"step": step, "tau": repr(record.tau)})
        if cfg.stop_after_step and step >= cfg.stop_after_step:
            _atomic_checkpoint(state, ckpt_path,
                               {"step": step, "tau": repr(record.tau)})
            stopped["flag"] = True
            return True
        return False

    status = "completed"
    error_text = ""
    try:
        state, trajectory = run_itpp(
            hamiltonian, schedule, policy,
            observables=[s for _, s in obs],
            reference_energy=reference,
            record_per_gate=cfg.record_per_gate,
            initial_state=initial_state,
            start_step=start_step,
            step_callback=callback,
        )
    except TraceCollapseError as err:
        status = "trace-collapse"
        error_text = str(err)
        state = None
        trajectory = err.trajectory if err.trajectory is not None else Trajectory()
    if stopped["flag"]:
        status = "interrupted"

    header = trajectory_header(cfg, reference, ref_source,
                               [label for label, _ in obs])
    with open(traj_path, "w") as f:
        for line in header:
            f.write(line + "\n")
        for row in kept_rows:
            f.write(row + "\n")
        for record in trajectory:
            f.write(record_row(record) + "\n")
            max_terms["value"] = max(max_terms["value"], record.n_terms)

    summary = {
        "status": status,
        "model": cfg.model_text(),
        "policy": policy_text(policy),
        "delta_tau": cfg.delta_tau,
        "tau_final": cfg.tau_final,
        "n_steps_total": schedule.n_steps,
        "reference_energy": reference,
        "reference_source": ref_source,
        "workers_env": os.environ.get("PAULIEVO_WORKERS", "unset"),
    }
    if len(trajectory):
        final = trajectory.final
        summary.update({
            "final_tau": final.tau,
            "final_energy": final.energy,
            "final_rel_error": final.relative_error,
            "final_n_terms": final.n_terms,
            "final_purity": final.purity,
            "max_n_terms": max_terms["value"],
            "total_wall_time_s": final.wall_time_s,
        })
    if error_text:
        summary["error"] = error_text
    write_summary(os.path.join(cfg.out_dir, "summary.txt"), summary)
    return summary


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run_itpp(args) -> int:
    try:
        cfg = build_run_config(args)
        summary = run_single(cfg)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"status = {summary['status']}")
    if "final_energy" in summary:
        print(f"final_energy = {_fmt(summary['final_energy'])}")
        print(f"final_n_terms = {summary['final_n_terms']}")
    if summary["status"] == "trace-collapse":
        print(f"error: {summary['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_resume(args) -> int:
    run_dir = args.run_dir
    config_path = os.path.join(run_dir, "config.ini")
    ckpt_path = os.path.join(run_dir, "checkpoint.psum")
    traj_path = os.path.join(run_dir, "trajectory.csv")
    try:
        if not os.path.exists(ckpt_path):
            raise ConfigError(f"no checkpoint in {run_dir}")
        cfg = read_config_echo(config_path)
        if args.stop_after_step is not None:
            cfg.stop_after_step = args.stop_after_step
        else:
            cfg.stop_after_step = 0
        state, extras = load_pauli_sum(ckpt_path)
        step = int(extras["step"])
        kept_rows = []
        if os.path.exists(traj_path):
            with open(traj_path) as f:
                for line in f:
                    line = line.rstrip("\n")
                    if line.startswith("#") or line.startswith("tau,"):
                        continue
                    kept_rows.append(line)
        # rows: tau=0 plus one per completed step (per-gate rows scale the
        # same way); keep only rows up to the checkpointed step
        per_step = 1
        if cfg.record_per_gate:
            per_step = len(cfg.hamiltonian().gated_terms())
        kept_rows = kept_rows[:1 + step * per_step]
        summary = run_single(cfg, resume_from=(state, step, kept_rows))
    except (ConfigError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"status = {summary['status']}")
    return 0 if summary["status"] != "trace-collapse" else 1


def cmd_exact(args) -> int:
    try:
        cfg = build_run_config(args)
        hamiltonian = cfg.hamiltonian()
        schedule = cfg.schedule()
        reference, ref_source = reference_for(cfg, hamiltonian)
        obs = cfg.observable_sums(hamiltonian.n_qubits)
        observables = [hamiltonian.to_sum()] + [s for _, s in obs]
        os.makedirs(cfg.out_dir, exist_ok=True)
        taus = [k * cfg.delta_tau for k in range(schedule.n_steps + 1)]
        curves = []
        if args.method in ("exact", "both"):
            curves.append(("exact_ite.csv", dense_exact_ite(
                hamiltonian, taus, observables, max_qubits=cfg.dense_guard)))
        if args.method in ("trotter", "both"):
            curves.append(("trotter_ite.csv", dense_trotter_ite(
                hamiltonian, schedule, observables,
                max_qubits=cfg.dense_guard)))
    except SizeGuardError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    header = trajectory_header(cfg, reference, ref_source,
                               [label for label, _ in obs])
    for filename, curve in curves:
        path = os.path.join(cfg.out_dir, filename)
        with open(path, "w") as f:
            for line in header:
                f.write(line + "\n")
            for t in range(len(curve.taus)):
                energy = curve.values[t, 0]
                rel = (abs(energy - reference) / abs(reference)
                       if reference else None)
                cells = [
                    _fmt(float(curve.taus[t])),
                    _fmt(float(energy)),
                    _fmt(rel),
                    "",  # n_terms has no dense meaning
                    _fmt(float(curve.purities[t])),
                    "",  # wall time not tracked for references
                ]
                cells += [_fmt(float(v)) for v in curve.values[t, 1:]]
                f.write(",".join(cells) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_bdg(args) -> int:
    try:
        n_values = [int(parse_number(v)) for v in args.N.split(",")]
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    rows = []
    for n in n_values:
        try:
            e0 = bdg_ground_energy(TfimParams(N=n, J=args.J, h=args.h))
        except ValueError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        rows.append((n, args.J, args.h, e0))
        print(f"E0(N={n}, J={_fmt(args.J)}, h={_fmt(args.h)}) = {_fmt(e0)}")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("N,J,h,E0\n")
            for n, j, h, e0 in rows:
                f.write(f"{n},{_fmt(j)},{_fmt(h)},{_fmt(e0)}\n")
        print(f"wrote {args.csv}")
    return 0


SWEEP_AXES = ("threshold", "N", "K", "delta_tau")


def cmd_sweep(args) -> int:
    try:
        base = build_run_config(args)
        if args.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}")
        values = [v for v in (s.strip() for s in args.values.split(","))
                  if v]
        if not values:
            raise ConfigError("empty sweep axis")
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    os.makedirs(base.out_dir, exist_ok=True)
    results = []
    for raw in values:
        cfg = replace(base)
        try:
            if args.axis == "threshold":
                value = parse_number(raw)
                cfg.truncation = f"threshold={value!r}"
            elif args.axis == "K":
                value = int(parse_number(raw))
                cfg.truncation = f"fixed_k={value}"
            elif args.axis == "N":
                value = int(parse_number(raw))
                cfg.N = value
            else:
                value = parse_number(raw)
                cfg.delta_tau = value
            cfg.out_dir = os.path.join(
                base.out_dir, "points", f"{args.axis}={raw}"
            )
            summary = run_single(cfg)
            results.append((raw, summary, None))
        except Exception as err:  # per-point failures must not end the sweep
            results.append((raw, None, f"{type(err).__name__}: {err}"))
    sweep_path = os.path.join(base.out_dir, "sweep.csv")
    with open(sweep_path, "w") as f:
        f.write(f"# schema: {SCHEMA_SWEEP}\n")
        f.write(f"# axis: {args.axis}\n")
        f.write("value,status,final_tau,final_energy,final_rel_error,"
                "final_n_terms,max_n_terms,error\n")
        for raw, summary, error in results:
            if summary is None:
                f.write(f"{raw},failed,,,,,,\"{error}\"\n")
            else:
                f.write(",".join([
                    raw,
                    summary["status"],
                    _fmt(summary.get("final_tau")),
                    _fmt(summary.get("final_energy")),
                    _fmt(summary.get("final_rel_error")),
                    _fmt(summary.get("final_n_terms")),
                    _fmt(summary.get("max_n_terms")),
                    "",
                ]) + "\n")
    print(f"wrote {sweep_path}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--kind", choices=("tfim", "terms"),
                   help="model kind (default tfim)")
    p.add_argument("--N", type=int, help="TFIM chain length")
    p.add_argument("--J", type=float, help="TFIM coupling")
    p.add_argument("--h", type=float, help="TFIM transverse field")
    p.add_argument("--terms-file", dest="terms_file",
                   help="plain-text Hamiltonian term file")
    p.add_argument("--delta-tau", dest="delta_tau", type=parse_number,
                   help="Trotter step size")
    p.add_argument("--tau-final", dest="tau_final", type=parse_number,
                   help="final imaginary time")
    p.add_argument("--dense-guard", dest="dense_guard", type=int,
                   help="dense-oracle qubit ceiling (default 14)")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--truncation",
                   help="none | threshold=D | fixed_k=K | weight=W, "
                        "comma-combinable (powers like 2^-7 accepted)")
    p.add_argument("--observables",
                   help="comma-separated Pauli strings for extra columns")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                   help="checkpoint every S Trotter steps (0 = off)")
    p.add_argument("--record-per-gate", dest="record_per_gate",
                   action="store_const", const=True,
                   help="record a trajectory row after every gate")
    p.add_argument("--stop-after-step", dest="stop_after_step", type=int,
                   help="checkpoint and exit after S steps")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paulievo",
        description="Sparse Pauli dynamics with imaginary-time propagation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run-itpp", help="propagate and record a trajectory")
    _add_model_flags(p_run)
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run_itpp)

    p_exact = sub.add_parser("exact", help="dense reference curves")
    _add_model_flags(p_exact)
    p_exact.add_argument("--method", choices=("exact", "trotter", "both"),
                         default="both")
    p_exact.set_defaults(func=cmd_exact)

    p_bdg = sub.add_parser("bdg", help="free-fermion TFIM ground energy")
    p_bdg.add_argument("--N", required=True,
                       help="chain length, or comma list of lengths")
    p_bdg.add_argument("--J", type=parse_number, default=1.0)
    p_bdg.add_argument("--h", type=parse_number, default=0.5)
    p_bdg.add_argument("--csv", help="also write (N,J,h,E0) rows here")
    p_bdg.set_defaults(func=cmd_bdg)

    p_sweep = sub.add_parser("sweep", help="one run per point of an axis")
    _add_model_flags(p_sweep)
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values (2^-k accepted)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_res = sub.add_parser("resume", help="continue from a checkpoint")
    p_res.add_argument("run_dir")
    p_res.add_argument("--stop-after-step", dest="stop_after_step", type=int,
                       default=None)
    p_res.set_defaults(func=cmd_resume)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
