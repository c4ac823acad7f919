"""Scenario runner, Monte Carlo experiments, CSV emission and the CLI.

Experiment defaults are desk-scale: support interval [-0.1, 0.14] m,
stiffness range [12.25, 19.6] 1/s^2, nominal CoM at (0, 0.6) m, four-second
runs at one-millisecond steps and a 0.01 success threshold on the final
position error and velocity norm.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _fast
from .capturability import SliceSpec, in_outer, slice_scan, velocity_box
from .control import (
    BalanceTarget,
    DcmController,
    GainConfig,
    IciBalanceController,
    IcpController,
    PureIciPolicy,
)
from .model import (
    ComState,
    ConstraintSet,
    Failure,
    Trajectory,
    apply_push,
    flag_input_violations,
    n_steps_for,
)

DEFAULT_CONSTRAINTS = ConstraintSet(
    p_min=-0.1, p_max=0.14, lambda_min=12.25, lambda_max=19.6, g=9.8
)
NOMINAL_POSITION = (0.0, 0.6)
DEFAULT_TF = 4.0
DEFAULT_DT = 1e-3
SUCCESS_THRESHOLD = 0.01

_KIND_CODES = {
    "pure-ici": _fast.KIND_PURE_ICI,
    "ici": _fast.KIND_ICI,
    "icp": _fast.KIND_ICP,
    "dcm": _fast.KIND_DCM,
}

_STATUS_REASON = {
    _fast.COMPLETED: "none",
    _fast.STATE_CONSTRAINT: "constraint",
    _fast.GAIN_INFEASIBLE: "gain-infeasible",
    _fast.DIVERGED: "diverged",
    _fast.AUX_DIVERGED: "diverged",
}

MC_HEADER = "trial,dcx0,dcz0,controller,success,pos_err,vel_err,failure_reason"
SLICE_HEADER = "u,v,class"


@dataclass(frozen=True)
class ControllerSpec:
    """Controller choice plus its parameters."""

    kind: str  # "ici" | "icp" | "dcm" | "pure-ici"
    gain: float = 10.0  # baseline feedback gain (icp, dcm)
    epsilon: float = 1e-3
    m_max: float = 10.0
    gamma: float = 0.1
    omega0: float | None = None  # dcm initial rate; None -> sqrt(g/target_z)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown controller kind {self.kind!r}")

    def resolved_omega0(self, target_z: float, g: float) -> float:
        if self.omega0 is not None:
            return self.omega0
        return math.sqrt(g / target_z)

    def label(self, target_z: float, g: float) -> str:
        if self.kind == "dcm":
            return f"dcm@{self.resolved_omega0(target_z, g):.6g}"
        return self.kind

    def gain_config(self) -> GainConfig:
        return GainConfig(epsilon=self.epsilon, m_max=self.m_max, gamma=self.gamma)

    def make_policy(self, target: BalanceTarget, cs: ConstraintSet):
        """Equivalent step-by-step policy object for model.simulate."""
        if self.kind == "pure-ici":
            return PureIciPolicy(cs.g)
        if self.kind == "ici":
            return IciBalanceController(target, self.gain_config(), cs)
        if self.kind == "icp":
            return IcpController(target, self.gain, cs)
        omega0 = self.resolved_omega0(float(target.c_d[1]), cs.g)
        return DcmController(target, self.gain, cs, omega0)


@dataclass(frozen=True)
class Scenario:
    """One push-recovery run."""

    nominal: ComState
    push: np.ndarray
    controller: ControllerSpec
    target: np.ndarray
    t_f: float = DEFAULT_TF
    dt: float = DEFAULT_DT
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "push", np.asarray(self.push, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if not self.t_f > 0.0:
            raise ValueError("final time must be positive")
        n_steps_for(self.t_f, self.dt)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    dcx0: float
    dcz0: float
    controller: str
    success: bool
    pos_err: float
    vel_err: float
    failure_reason: str  # none | diverged | constraint | gain-infeasible


def success(x_tf: ComState, c_d) -> bool:
    """Final position within threshold of the target and nearly at rest."""
    c_d = np.asarray(c_d, dtype=float)
    pos_err = math.hypot(x_tf.c_x - c_d[0], x_tf.c_z - c_d[1])
    vel_err = math.hypot(x_tf.dc_x, x_tf.dc_z)
    return max(pos_err, vel_err) < SUCCESS_THRESHOLD


def _rollout_into(
    spec: ControllerSpec,
    x0: ComState,
    target: np.ndarray,
    t_f: float,
    dt: float,
    cs: ConstraintSet,
    buf: np.ndarray,
) -> tuple[int, int]:
    return _fast.rollout(
        _KIND_CODES[spec.kind],
        x0.c_x,
        x0.c_z,
        x0.dc_x,
        x0.dc_z,
        cs.p_min,
        cs.p_max,
        cs.lambda_min,
        cs.lambda_max,
        cs.g,
        float(target[0]),
        float(target[1]),
        spec.epsilon,
        spec.m_max,
        spec.gamma,
        spec.gain,
        spec.resolved_omega0(float(target[1]), cs.g),
        dt,
        n_steps_for(t_f, dt),
        buf,
    )


def _record_from(
    trial: int,
    x0: ComState,
    label: str,
    target: np.ndarray,
    status: int,
    rows: int,
    buf: np.ndarray,
    dt: float,
) -> TrialRecord:
    if rows > 0:
        last = buf[rows - 1]
        cx, cz, dcx, dcz = last[0], last[1], last[2], last[3]
    else:
        cx, cz, dcx, dcz = x0.c_x, x0.c_z, x0.dc_x, x0.dc_z
    pos_err = math.hypot(cx - target[0], cz - target[1])
    vel_err = math.hypot(dcx, dcz)
    ok = status == _fast.COMPLETED and max(pos_err, vel_err) < SUCCESS_THRESHOLD
    if status == _fast.COMPLETED:
        reason = "none" if ok else "diverged"
    else:
        reason = _STATUS_REASON[status]
    return TrialRecord(
        trial=trial,
        dcx0=x0.dc_x,
        dcz0=x0.dc_z,
        controller=label,
        success=ok,
        pos_err=pos_err,
        vel_err=vel_err,
        failure_reason=reason,
    )


def run_scenario(s: Scenario) -> tuple[Trajectory, TrialRecord]:
    """Apply the push, roll out the controller, evaluate the run."""
    # Validates that the target maps inside the input bounds.
    BalanceTarget.for_position(s.target, s.constraints)
    x0 = apply_push(s.nominal, s.push)
    n = n_steps_for(s.t_f, s.dt)
    buf = np.full((n + 1, _fast.N_COLS), np.nan)
    status, rows = _rollout_into(
        s.controller, x0, s.target, s.t_f, s.dt, s.constraints, buf
    )
    failure = None
    if status != _fast.COMPLETED:
        failure = Failure(_STATUS_REASON[status], rows * s.dt)
    traj = Trajectory(s.dt, buf[:rows].copy(), failure)
    traj.input_violations = flag_input_violations(traj.data, s.constraints)
    label = s.controller.label(float(s.target[1]), s.constraints.g)
    record = _record_from(0, x0, label, s.target, status, rows, buf, s.dt)
    return traj, record


def sample_velocity_in_outer(
    nominal_c,
    cs: ConstraintSet,
    rng: np.random.Generator,
    box: np.ndarray | None = None,
    max_tries: int = 20000,
) -> np.ndarray:
    """Uniform rejection sample from the outer-region velocity slice.

    The proposal box is found by bisection searches along the four signed
    velocity directions (pass ``box`` to reuse it across draws).
    """
    nominal_c = np.asarray(nominal_c, dtype=float)
    rest_lam = cs.g / nominal_c[1]
    if not cs.lambda_min <= rest_lam <= cs.lambda_max:
        raise ValueError("nominal position has no stiffness-feasible rest input")
    if box is None:
        box = velocity_box(nominal_c, cs, "outer")
    for _ in range(max_tries):
        dcx = rng.uniform(box[0, 0], box[0, 1])
        dcz = rng.uniform(box[1, 0], box[1, 1])
        if in_outer(ComState(nominal_c[0], nominal_c[1], dcx, dcz), cs):
            return np.array([dcx, dcz])
    raise RuntimeError(
        "rejection sampling acceptance rate below 1e-4; check the constraints"
    )


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    key = np.array([seed, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def monte_carlo(
    spec: ControllerSpec,
    n: int,
    seed: int,
    cs: ConstraintSet = DEFAULT_CONSTRAINTS,
    nominal_c=NOMINAL_POSITION,
    target=None,
    t_f: float = DEFAULT_TF,
    dt: float = DEFAULT_DT,
    hook: Callable[[int, np.ndarray, np.ndarray, TrialRecord], None] | None = None,
) -> list[TrialRecord]:
    """Independent push trials from rest at the nominal position.

    Trial velocities are drawn from a per-trial counter-based generator keyed
    by (seed, trial index), so the sample sequence is identical across
    controllers and independent of execution order.  ``hook`` receives
    (trial, velocity, record-buffer view, record) per trial; the buffer view
    is reused by the next trial.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    nominal_c = np.asarray(nominal_c, dtype=float)
    target = nominal_c if target is None else np.asarray(target, dtype=float)
    BalanceTarget.for_position(target, cs)
    label = spec.label(float(target[1]), cs.g)
    box = velocity_box(nominal_c, cs, "outer")
    nominal = ComState(nominal_c[0], nominal_c[1], 0.0, 0.0)
    n_steps = n_steps_for(t_f, dt)
    buf = np.full((n_steps + 1, _fast.N_COLS), np.nan)
    records = []
    for trial in range(n):
        rng = _trial_rng(seed, trial)
        dv = sample_velocity_in_outer(nominal_c, cs, rng, box=box)
        x0 = apply_push(nominal, dv)
        status, rows = _rollout_into(spec, x0, target, t_f, dt, cs, buf)
        rec = _record_from(trial, x0, label, target, status, rows, buf, dt)
        if hook is not None:
            hook(trial, dv, buf[:rows], rec)
        records.append(rec)
    return records


def write_records_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MC_HEADER + "\n")
        for r in records:
            fh.write(
                ",".join(
                    [
                        str(r.trial),
                        repr(float(r.dcx0)),
                        repr(float(r.dcz0)),
                        r.controller,
                        str(int(r.success)),
                        repr(float(r.pos_err)),
                        repr(float(r.vel_err)),
                        r.failure_reason,
                    ]
                )
                + "\n"
            )


def write_slice_csv(spec: SliceSpec, grid: np.ndarray, path) -> None:
    u_vals, v_vals = spec.centers()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SLICE_HEADER + "\n")
        for i in range(grid.shape[0]):
            u = repr(float(u_vals[i]))
            for j in range(grid.shape[1]):
                fh.write(f"{u},{repr(float(v_vals[j]))},{int(grid[i, j])}\n")


# ---------------------------------------------------------------------------
# Command line interface


def _add_physics_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p-min", type=float, default=DEFAULT_CONSTRAINTS.p_min)
    p.add_argument("--p-max", type=float, default=DEFAULT_CONSTRAINTS.p_max)
    p.add_argument(
        "--lambda-min", type=float, default=DEFAULT_CONSTRAINTS.lambda_min
    )
    p.add_argument(
        "--lambda-max", type=float, default=DEFAULT_CONSTRAINTS.lambda_max
    )
    p.add_argument("--g", type=float, default=DEFAULT_CONSTRAINTS.g)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--tf", type=float, default=DEFAULT_TF)
    p.add_argument(
        "--controller",
        choices=sorted(_KIND_CODES),
        default="ici",
    )
    p.add_argument("--gain", type=float, default=10.0, help="baseline feedback gain")
    p.add_argument("--epsilon", type=float, default=1e-3, help="minimum gain")
    p.add_argument("--max-gain", type=float, default=10.0, help="maximum gain")
    p.add_argument("--gamma", type=float, default=0.1, help="compensation budget")
    p.add_argument(
        "--omega0",
        type=float,
        default=None,
        help="initial divergence rate of the dcm baseline (default sqrt(g/target_z))",
    )
    p.add_argument("--target-cx", type=float, default=NOMINAL_POSITION[0])
    p.add_argument("--target-cz", type=float, default=NOMINAL_POSITION[1])


def _constraints_from(args) -> ConstraintSet:
    return ConstraintSet(
        p_min=args.p_min,
        p_max=args.p_max,
        lambda_min=args.lambda_min,
        lambda_max=args.lambda_max,
        g=args.g,
    )


def _spec_from(args) -> ControllerSpec:
    return ControllerSpec(
        kind=args.controller,
        gain=args.gain,
        epsilon=args.epsilon,
        m_max=args.max_gain,
        gamma=args.gamma,
        omega0=args.omega0,
    )


def _cmd_simulate(args) -> int:
    cs = _constraints_from(args)
    scenario = Scenario(
        nominal=ComState(args.nominal_cx, args.nominal_cz, 0.0, 0.0),
        push=np.array([args.push_dvx, args.push_dvz]),
        controller=_spec_from(args),
        target=np.array([args.target_cx, args.target_cz]),
        t_f=args.tf,
        dt=args.dt,
        constraints=cs,
    )
    traj, record = run_scenario(scenario)
    if args.out:
        traj.to_csv(args.out)
    print(
        f"controller={record.controller} success={record.success} "
        f"pos_err={record.pos_err:.6g} vel_err={record.vel_err:.6g} "
        f"reason={record.failure_reason}"
    )
    if traj.input_violations.size:
        print(f"input bound violations at {traj.input_violations.size} steps")
    return 0 if record.success else 1


def _cmd_region_slice(args) -> int:
    cs = _constraints_from(args)
    fixed_all = {
        "c_x": args.fixed_cx,
        "c_z": args.fixed_cz,
        "dc_x": args.fixed_dcx,
        "dc_z": args.fixed_dcz,
    }
    sweep = (args.sweep_u, args.sweep_v)
    fixed = {k: v for k, v in fixed_all.items() if k not in sweep}
    spec = SliceSpec(
        sweep=sweep,
        u_range=(args.u_min, args.u_max),
        v_range=(args.v_min, args.v_max),
        resolution=args.resolution,
        fixed=fixed,
    )
    grid = slice_scan(spec, cs)
    write_slice_csv(spec, grid, args.out)
    counts = np.bincount(grid.ravel(), minlength=3)
    print(
        f"cells={grid.size} inner={counts[0]} outer-only={counts[1]} "
        f"outside={counts[2]}"
    )
    return 0


def _cmd_monte_carlo(args) -> int:
    cs = _constraints_from(args)
    records = monte_carlo(
        _spec_from(args),
        n=args.n,
        seed=args.seed,
        cs=cs,
        nominal_c=(args.nominal_cx, args.nominal_cz),
        target=(args.target_cx, args.target_cz),
        t_f=args.tf,
        dt=args.dt,
    )
    write_records_csv(records, args.out)
    wins = sum(r.success for r in records)
    print(f"controller={records[0].controller} successes={wins}/{len(records)}")
    return 0


def _cmd_compare(args) -> int:
    cs = _constraints_from(args)
    target = (args.target_cx, args.target_cz)
    base = ControllerSpec(
        kind="ici", epsilon=args.epsilon, m_max=args.max_gain, gamma=args.gamma
    )
    specs = [
        base,
        ControllerSpec(kind="icp", gain=args.gain),
        ControllerSpec(kind="dcm", gain=args.gain, omega0=None),
        ControllerSpec(kind="dcm", gain=args.gain, omega0=args.omega0_alt),
    ]
    all_records: list[TrialRecord] = []
    for spec in specs:
        records = monte_carlo(
            spec,
            n=args.n,
            seed=args.seed,
            cs=cs,
            nominal_c=(args.nominal_cx, args.nominal_cz),
            target=target,
            t_f=args.tf,
            dt=args.dt,
        )
        wins = sum(r.success for r in records)
        print(f"{records[0].controller}: {wins}/{len(records)} successes")
        all_records.extend(records)
    write_records_csv(all_records, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vhip-balance",
        description="Simulation and balance-control experiments for the "
        "variable-height inverted pendulum",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one push-recovery scenario")
    _add_physics_flags(p_sim)
    _add_run_flags(p_sim)
    p_sim.add_argument("--nominal-cx", type=float, default=NOMINAL_POSITION[0])
    p_sim.add_argument("--nominal-cz", type=float, default=NOMINAL_POSITION[1])
    p_sim.add_argument("--push-dvx", type=float, default=0.0)
    p_sim.add_argument("--push-dvz", type=float, default=0.0)
    p_sim.add_argument("--out", default=None, help="trajectory CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_slice = sub.add_parser(
        "region-slice", help="classify a 2D slice of the state space"
    )
    _add_physics_flags(p_slice)
    coords = sorted(("c_x", "c_z", "dc_x", "dc_z"))
    p_slice.add_argument("--sweep-u", choices=coords, default="c_x")
    p_slice.add_argument("--sweep-v", choices=coords, default="dc_x")
    p_slice.add_argument("--u-min", type=float, default=-0.2)
    p_slice.add_argument("--u-max", type=float, default=0.2)
    p_slice.add_argument("--v-min", type=float, default=-1.0)
    p_slice.add_argument("--v-max", type=float, default=1.0)
    p_slice.add_argument("--fixed-cx", type=float, default=0.0)
    p_slice.add_argument("--fixed-cz", type=float, default=NOMINAL_POSITION[1])
    p_slice.add_argument("--fixed-dcx", type=float, default=0.0)
    p_slice.add_argument("--fixed-dcz", type=float, default=0.0)
    p_slice.add_argument("--resolution", type=int, default=400)
    p_slice.add_argument("--out", required=True, help="slice CSV path")
    p_slice.set_defaults(func=_cmd_region_slice)

    p_mc = sub.add_parser("monte-carlo", help="random-push success statistics")
    _add_physics_flags(p_mc)
    _add_run_flags(p_mc)
    p_mc.add_argument("--nominal-cx", type=float, default=NOMINAL_POSITION[0])
    p_mc.add_argument("--nominal-cz", type=float, default=NOMINAL_POSITION[1])
    p_mc.add_argument("--n", type=int, default=10000)
    p_mc.add_argument("--seed", type=int, default=1)
    p_mc.add_argument("--out", required=True, help="records CSV path")
    p_mc.set_defaults(func=_cmd_monte_carlo)

    p_cmp = sub.add_parser(
        "compare", help="seed-paired Monte Carlo across all controllers"
    )
    _add_physics_flags(p_cmp)
    _add_run_flags(p_cmp)
    p_cmp.add_argument("--nominal-cx", type=float, default=NOMINAL_POSITION[0])
    p_cmp.add_argument("--nominal-cz", type=float, default=NOMINAL_POSITION[1])
    p_cmp.add_argument("--n", type=int, default=10000)
    p_cmp.add_argument("--seed", type=int, default=1)
    p_cmp.add_argument(
        "--omega0-alt",
        type=float,
        default=3.6,
        help="alternative initial rate for the second dcm run",
    )
    p_cmp.add_argument("--out", required=True, help="records CSV path")
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def cli_dispatch(argv: Sequence[str]) -> int:
    """Parse and run a command; exit codes: 0 ok, 1 scenario failed, 2 usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        code = exc.code
        return 0 if code in (None, 0) else 2
    if getattr(args, "n", 1) < 1:
        print("error: --n must be at least 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", 0) < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
