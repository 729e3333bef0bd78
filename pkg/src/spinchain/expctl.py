"""
Command-line experiment runner.

``spinchain run|calibrate|verify-circuits|two-qubit`` builds an initial
chain state, evolves it with the exact propagator or the compiled circuits,
and writes per-time observables as CSV.

Config files hold flat ``key = value`` lines; list values are separated by
spaces or commas. Command-line flags override file values.

Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 calibration or
positivity failure.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import calibrate as cal
from .densemat import expm_herm, phase_aligned_distance
from .dynamics import (
    Trajectory,
    dm_chain_hamiltonian,
    dm_pair_hamiltonian,
    initial_directions,
    sweep,
)
from .exceptions import CalibrationError, ContractError, PositivityError, SpinChainError
from .qcircuit import (
    AB_FIRST,
    BC_FIRST,
    CARTAN_SAMPLE,
    PRODUCT18,
    SWAPPED13,
    CouplingMap,
    apply_density,
    cartan_constants,
    cartan_residual,
    check_layout,
    cnot_count,
    coupling_prep,
    k_circuit_product,
    k_circuit_swapped,
    k_generator,
    three_qubit_dm_generator,
    u2_dm_circuit,
    u3_cartan_circuit,
    unitary_of,
)
from .thermostate import (
    ChainSpec,
    DensityMatrix,
    EnergyScale,
    alpha_max,
    chain_state,
    gibbs_populations,
    gibbs_qubit,
    pair_state,
    product_state,
)
from .validation import check_density, check_tau_grid

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_CALIBRATION = 3

BACKENDS = ("exact", "circuit")
CIRCUIT_TOL = 1e-9

TWO_QUBIT_TEMPS = (5.0, 2.0)
TWO_QUBIT_ALPHA_FRACTION = -0.9


# --------------------------------------------------------------- simulator


def circuit_evolver(n: int, coupling: float = 1.0) -> Callable[[float], np.ndarray]:
    """``tau -> unitary`` through the compiled circuits for two or three qubits."""
    if n == 2:
        return lambda tau: unitary_of(u2_dm_circuit(tau * coupling))
    if n == 3:
        consts = cartan_constants()
        return lambda tau: unitary_of(u3_cartan_circuit(tau, consts, SWAPPED13, coupling))
    raise ContractError(f"the circuit backend supports 2 or 3 qubits, got {n}")


class HeatFlowSimulator(BaseEstimator):
    """Estimator-style wrapper: ``fit`` stores the initial state, ``transform``
    evolves it over a tau grid and returns a :class:`Trajectory`.

    ``fit`` and ``transform`` take different inputs, so there is no
    ``fit_transform``.
    """

    def __init__(self, coupling=1.0, epsilon=cal.EPSILON_PEV, backend="exact"):
        self.coupling = coupling
        self.epsilon = epsilon
        self.backend = backend

    def fit(self, X, y=None):
        if self.backend not in BACKENDS:
            raise ContractError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        self.rho0_ = check_density(X)
        self.hamiltonian_ = dm_chain_hamiltonian(self.rho0_.num_qubits, self.coupling)
        return self

    def transform(self, X) -> Trajectory:
        check_is_fitted(self, "rho0_")
        taus = check_tau_grid(X)
        evolver = None
        if self.backend == "circuit":
            evolver = circuit_evolver(self.rho0_.num_qubits, self.coupling)
        return sweep(self.rho0_, self.hamiltonian_, taus, EnergyScale(self.epsilon), evolver)


# --------------------------------------------------------------- config


@dataclass
class RunConfig:
    case: str | None = None
    temps: tuple | None = None
    alphas: tuple | None = None
    base_temps: tuple | None = None
    taus: tuple | None = None
    order: str = AB_FIRST
    backend: str = "exact"
    coupling: float = 1.0
    epsilon: float = cal.EPSILON_PEV
    tau_start: float = 0.0
    tau_stop: float = math.pi
    tau_points: int = 101
    out: str | None = None

    _LISTS = ("temps", "alphas", "base_temps", "taus")
    _FLOATS = ("coupling", "epsilon", "tau_start", "tau_stop")

    def validate(self) -> "RunConfig":
        styles = [
            self.case is not None,
            self.temps is not None,
            self.base_temps is not None,
        ]
        if sum(styles) != 1:
            raise ContractError("give exactly one of: case, temps (+ alphas), base_temps + taus")
        if self.backend not in BACKENDS:
            raise ContractError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.tau_points < 2:
            raise ContractError("tau_points must be at least 2")
        if not self.tau_stop > self.tau_start:
            raise ContractError("tau_stop must exceed tau_start")
        if self.order not in (AB_FIRST, BC_FIRST):
            raise ContractError(f"order must be {AB_FIRST} or {BC_FIRST}")
        if self.case is not None:
            cal.get_preset(self.case)
        if self.base_temps is not None and (self.taus is None or len(self.taus) != 2):
            raise ContractError("base_temps needs taus = tau_ab tau_bc")
        if self.base_temps is not None and len(self.base_temps) != 3:
            raise ContractError("base_temps needs three temperatures")
        return self

    def grid(self) -> np.ndarray:
        return np.linspace(self.tau_start, self.tau_stop, self.tau_points)

    @classmethod
    def coerce(cls, key: str, value: str):
        if key in cls._LISTS:
            return tuple(float(v) for v in value.replace(",", " ").split())
        if key in cls._FLOATS:
            return float(value)
        if key == "tau_points":
            return int(value)
        return value


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment line."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        key, sep, value = ln.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known:
            raise ContractError(f"bad config line {ln!r}")
        try:
            out[key] = RunConfig.coerce(key, value.strip())
        except ValueError as exc:
            raise ContractError(f"bad value for {key}: {exc}") from None
    return out


# ---------------------------------------------------------- initial states


def case_report(name: str, epsilon: float) -> cal.FitReport:
    """Persisted calibration for ``name``, computing and saving it if absent."""
    report = cal.load_report(name)
    if report is None or report.epsilon != epsilon:
        report = cal.calibrate_case(name, epsilon)
        cal.save_report(report)
    return report


def initial_state(cfg: RunConfig) -> DensityMatrix:
    scale = EnergyScale(cfg.epsilon)
    if cfg.case is not None:
        return cal.coupled_state(case_report(cfg.case, cfg.epsilon))
    if cfg.temps is not None:
        alphas = cfg.alphas if cfg.alphas is not None else (0.0,) * (len(cfg.temps) - 1)
        return chain_state(ChainSpec(cfg.temps, alphas, scale))
    pops = [gibbs_populations(t, scale)[1] for t in cfg.base_temps]
    return apply_density(coupling_prep(*cfg.taus, order=cfg.order), product_state(pops))


# -------------------------------------------------------------- CSV output


def qubit_names(n: int) -> list[str]:
    return list("ABC") if n == 3 else list("AB") if n == 2 else [str(q) for q in range(n)]


def _pair_name(names, pair) -> str:
    return "".join(names[q] for q in pair)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trajectory_columns(traj: Trajectory) -> tuple[list[str], np.ndarray]:
    n = traj.num_qubits
    names = qubit_names(n)
    pairs = [_pair_name(names, p) for p in traj.pairs]
    header = ["tau"]
    header += [f"U_{q}" for q in names] + [f"Q_{q}" for q in names] + [f"kT_{q}" for q in names]
    header += [f"I_{p}" for p in pairs] + [f"D_{p}" for p in pairs] + [f"alpha_{p}" for p in pairs]
    data = np.column_stack(
        [
            traj.taus,
            traj.energies,
            traj.heats,
            traj.temperatures,
            traj.mutual_info,
            traj.discord,
            traj.alphas.real,
        ]
    )
    return header, data


def write_csv(header: Sequence[str], data: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in data:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def trajectory_csv(traj: Trajectory) -> str:
    return write_csv(*trajectory_columns(traj))


def direction_summary(traj: Trajectory) -> list[str]:
    """Initial heat direction per qubit and the chain-level flow label."""
    names = qubit_names(traj.num_qubits)
    signs = initial_directions(traj)
    word = {-1: "gives heat", 0: "no change", 1: "absorbs heat"}
    lines = [f"initial dU_{q}: {word[s]}" for q, s in zip(names, signs)]
    if traj.num_qubits >= 2:
        first, last = signs[0], signs[-1]
        if first < 0 < last:
            lines.append("direction: " + "->".join(names))
        elif last < 0 < first:
            lines.append("direction: " + "->".join(reversed(names)))
        else:
            lines.append("direction: mixed")
    if traj.num_qubits == 3:
        dq = np.abs(traj.energies[1] - traj.energies[0])
        lines.append(f"|Q_A| vs |Q_C| at first step: {_fmt(dq[0])} vs {_fmt(dq[2])}")
    return lines


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_run(cfg: RunConfig) -> tuple[Trajectory, list[str]]:
    cfg.validate()
    rho0 = initial_state(cfg)
    sim = HeatFlowSimulator(cfg.coupling, cfg.epsilon, cfg.backend).fit(rho0)
    traj = sim.transform(cfg.grid())
    summary = direction_summary(traj)
    _emit(trajectory_csv(traj), cfg.out)
    return traj, summary


def cmd_calibrate(case: str, epsilon: float = cal.EPSILON_PEV):
    """Calibrate one case, persist it and compare with the reference values."""
    preset = cal.get_preset(case)
    try:
        report = cal.calibrate_case(case, epsilon)
    except CalibrationError as exc:
        if exc.report is not None:
            cal.save_report(exc.report)
        raise
    path = cal.save_report(report)
    return report, cal.verify_preset(preset, report), path


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def cmd_verify_circuits() -> list[CheckResult]:
    consts = cartan_constants()
    out = []

    def add(name, ok, detail):
        out.append(CheckResult(name, bool(ok), detail))

    k_forms = {
        "u2": (u2_dm_circuit(0.37), 2),
        "k_product": (k_circuit_product(consts), 8),
        "k_swapped": (k_circuit_swapped(consts), 10),
        "cartan18": (u3_cartan_circuit(0.37, consts, PRODUCT18), 18),
        "cartan13": (u3_cartan_circuit(0.37, consts, SWAPPED13), 13),
    }
    for name, (circ, want) in k_forms.items():
        got = cnot_count(circ)
        add(f"cnot_count[{name}]", got == want, f"{got} (expected {want})")

    res = cartan_residual(consts)
    add("cartan_residual", res < CIRCUIT_TOL, f"{res:.3e}")

    h2 = dm_pair_hamiltonian().mat
    h3 = three_qubit_dm_generator()
    for tau in (0.0,) + CARTAN_SAMPLE:
        d = phase_aligned_distance(unitary_of(u2_dm_circuit(tau)), expm_herm(h2, tau))
        add(f"u2_equivalence[tau={tau}]", d < CIRCUIT_TOL, f"{d:.3e}")
        for variant in (PRODUCT18, SWAPPED13):
            circ = u3_cartan_circuit(tau, consts, variant)
            d = phase_aligned_distance(unitary_of(circ), expm_herm(h3, tau))
            add(f"{variant}_equivalence[tau={tau}]", d < CIRCUIT_TOL, f"{d:.3e}")

    k = expm_herm(k_generator(consts.alpha, consts.beta), 1.0)
    for name, circ in (("k_product", k_circuit_product(consts)), ("k_swapped", k_circuit_swapped(consts))):
        d = phase_aligned_distance(unitary_of(circ), k)
        add(f"{name}_equivalence", d < CIRCUIT_TOL, f"{d:.3e}")

    linear = CouplingMap.linear(3)
    for name, circ in (
        ("cartan13", u3_cartan_circuit(0.37, consts, SWAPPED13)),
        ("k_swapped", k_circuit_swapped(consts)),
        ("u2", u2_dm_circuit(0.37)),
    ):
        bad = check_layout(circ, linear)
        add(f"layout[{name}]", not bad, f"{len(bad)} violation(s)")
    return out


@dataclass
class TwoQubitResult:
    uncorrelated: Trajectory
    correlated: Trajectory
    alpha: float


def two_qubit_states(temps=TWO_QUBIT_TEMPS, epsilon=cal.EPSILON_PEV, fraction=TWO_QUBIT_ALPHA_FRACTION):
    """Hot qubit A and cold qubit B, without and with ``fraction * alpha_max``."""
    scale = EnergyScale(epsilon)
    a, b = gibbs_qubit(temps[0], scale), gibbs_qubit(temps[1], scale)
    alpha = fraction * alpha_max(a, b)
    return pair_state(a, b), pair_state(a, b, alpha), alpha


def cmd_two_qubit(cfg: RunConfig) -> tuple[TwoQubitResult, list[str]]:
    unc, cor, alpha = two_qubit_states(epsilon=cfg.epsilon)
    sim = HeatFlowSimulator(cfg.coupling, cfg.epsilon, cfg.backend)
    taus = cfg.grid()
    t_unc = sim.fit(unc).transform(taus)
    t_cor = sim.fit(cor).transform(taus)
    h_unc, d_unc = trajectory_columns(t_unc)
    h_cor, d_cor = trajectory_columns(t_cor)
    header = ["tau"] + [f"{h}_uncorr" for h in h_unc[1:]] + [f"{h}_corr" for h in h_cor[1:]]
    data = np.column_stack([d_unc, d_cor[:, 1:]])
    _emit(write_csv(header, data), cfg.out)
    word = {-1: "decreases", 0: "unchanged", 1: "increases"}
    summary = [
        f"uncorrelated: hot qubit U {word[initial_directions(t_unc)[0]]} initially",
        f"correlated (alpha = {_fmt(alpha)}): hot qubit U {word[initial_directions(t_cor)[0]]} initially",
    ]
    return TwoQubitResult(t_unc, t_cor, alpha), summary


# -------------------------------------------------------------------- CLI


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinchain", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("command", choices=["run", "calibrate", "verify-circuits", "two-qubit"])
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--case", help=f"one of {sorted(cal.PRESETS)}")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--tau-start", type=float)
    p.add_argument("--tau-stop", type=float)
    p.add_argument("--tau-points", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    return p


def _merge_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(parse_config(Path(args.config).read_text()))
    flags = {
        "case": args.case,
        "backend": args.backend,
        "tau_start": args.tau_start,
        "tau_stop": args.tau_stop,
        "tau_points": args.tau_points,
        "out": args.out,
    }
    for key, value in flags.items():
        if value is not None:
            values[key] = value
    if args.case is not None:
        # a case on the command line replaces any state given in the file
        for key in ("temps", "alphas", "base_temps", "taus"):
            values.pop(key, None)
    return RunConfig(**values)


def _report(lines: Sequence[str]) -> None:
    for ln in lines:
        print(ln, file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = _merge_config(args)
        if args.command == "run":
            _, summary = cmd_run(cfg)
            _report(summary)
            return EXIT_OK
        if args.command == "two-qubit":
            cfg = replace(cfg, case=None, temps=None, base_temps=None)
            cfg_check = replace(cfg, temps=TWO_QUBIT_TEMPS)
            cfg_check.validate()
            _, summary = cmd_two_qubit(cfg)
            _report(summary)
            return EXIT_OK
        if args.command == "calibrate":
            if cfg.case is None:
                raise ContractError("calibrate needs --case")
            report, checks, path = cmd_calibrate(cfg.case, cfg.epsilon)
            print(f"case {report.case}: order {report.order}, taus {report.taus}, cost {report.cost:.4g}")
            for c in checks:
                status = "PASS" if c.passed else "FAIL"
                print(f"{status} {c.column}: achieved {c.achieved:.4f} target {c.target:.4f} tol {c.tolerance:g}")
            print(f"calibration written to {path}")
            return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY
        results = cmd_verify_circuits()
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            print("failing checks: " + ", ".join(failed))
            return EXIT_VERIFY
        return EXIT_OK
    except (CalibrationError, PositivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ContractError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpinChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
