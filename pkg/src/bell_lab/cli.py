"""bell-lab command line.

Verbs: quantum, audit, polytope, simulate.  Machine-readable output (CSV or
JSON lines) goes to stdout; logs and warnings go to stderr.

Exit codes: 0 all checks hold / not applicable, 1 some check fails,
2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from bell_lab import __version__
from bell_lab.errors import BellLabError, WrongModelKindError
from bell_lab.hv_models import (
    DEFAULT_THETAS,
    HVModel,
    build_sign_model,
    build_singlet_outcome_dependent,
    load_model,
    model_quantum_joint,
)
from bell_lab.local_polytope import (
    anticorrelation_table,
    is_local,
    load_table,
    singlet_table,
    zero_table,
)
from bell_lab.locality_audit import CHECKS, Verdict, not_applicable, Condition
from bell_lab.mc_sim import QUANTUM, SimulationConfig, compare, simulate
from bell_lab.prob_core import OUTCOMES
from bell_lab.quantum_oracle import (
    SettingPair,
    fold_angle,
    singlet_conditional,
    singlet_joint,
    singlet_marginal,
)

log = logging.getLogger("bell_lab")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

CHECK_CONDITIONS = {
    "outcome-independence": Condition.OUTCOME_INDEPENDENCE,
    "parameter-independence": Condition.PARAMETER_INDEPENDENCE,
    "bell-locality": Condition.BELL_LOCALITY,
    "f-normalization": Condition.F_NORMALIZATION,
    "f-conditional-identification": Condition.F_CONDITIONAL_IDENTIFICATION,
    "eq19-consistency": Condition.EQ19_CONSISTENCY,
    "zero-wing-means": Condition.ZERO_WING_MEANS,
    "deterministic-reduction": Condition.DETERMINISTIC_REDUCTION,
    "quantum-reproduction": Condition.QUANTUM_REPRODUCTION,
}
POLYTOPE_FIXTURES = {
    "singlet-chsh": singlet_table,
    "zero": zero_table,
    "anticorrelation": anticorrelation_table,
}


class InputError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def _angle(value: float, degrees: bool) -> float:
    return math.radians(value) if degrees else value


def _folded(value: float, degrees: bool) -> float:
    x = _angle(value, degrees)
    folded = fold_angle(x)
    if folded != x:
        log.warning("angle %r folded into [0, 2pi): %r", value, folded)
    return folded


def parse_fixture(spec: str, wing1=None, wing2=None) -> HVModel:
    """``sign-model:N`` or ``singlet-od``."""
    name, _, arg = spec.partition(":")
    wing1 = (0.0,) if wing1 is None else tuple(wing1)
    wing2 = DEFAULT_THETAS if wing2 is None else tuple(wing2)
    if name == "sign-model":
        try:
            n = int(arg)
        except ValueError:
            raise InputError(f"fixture {spec!r}: expected sign-model:N") from None
        return build_sign_model(n, wing1, wing2)
    if name == "singlet-od" and not arg:
        return build_singlet_outcome_dependent(wing1, wing2)
    raise InputError(f"unknown fixture {spec!r}")


def _emit(lines, out: Optional[str]):
    text = "".join(line + "\n" for line in lines)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run_checks(model: HVModel, names, tol: float, claims_both_orderings: bool = False):
    reports = []
    for name in names:
        fn = CHECKS[name]
        try:
            if name == "zero-wing-means":
                rep = fn(model, tol=tol, claims_both_orderings=claims_both_orderings)
            else:
                rep = fn(model, tol=tol)
        except WrongModelKindError as exc:
            rep = not_applicable(CHECK_CONDITIONS[name], tol, str(exc))
        reports.append(rep)
    return reports


def _exit_code(reports) -> int:
    return EXIT_FAIL if any(r.verdict is Verdict.FAILS for r in reports) else EXIT_OK


# -- verbs ---------------------------------------------------------------------

def cmd_quantum(args) -> int:
    rows = ["theta,r,q,joint,marginal_1,marginal_2" + (",conditional" if args.conditional else "")]
    rs = OUTCOMES if args.r is None else [o for o in OUTCOMES if o == args.r]
    qs = OUTCOMES if args.q is None else [o for o in OUTCOMES if o == args.q]
    for raw in args.theta:
        x = _angle(raw, args.degrees)
        s = SettingPair.from_theta(x)
        if s.theta_ab != x:
            log.warning("theta %r folded to %r", raw, s.theta_ab)
        for r in rs:
            for q in qs:
                row = (f"{s.theta_ab:.12g},{int(r)},{int(q)},{singlet_joint(s, r, q):.12g},"
                       f"{singlet_marginal(1, r):.12g},{singlet_marginal(2, q):.12g}")
                if args.conditional:
                    row += f",{singlet_conditional(s, r, q):.12g}"
                rows.append(row)
    _emit(rows, args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    wing1 = None if args.wing1 is None else [_folded(a, args.degrees) for a in args.wing1]
    wing2 = None if args.wing2 is None else [_folded(a, args.degrees) for a in args.wing2]
    if (args.model is None) == (args.fixture is None):
        raise InputError("give exactly one of a model file or --fixture")
    if args.fixture is not None:
        model = parse_fixture(args.fixture, wing1, wing2)
    else:
        model = load_model(args.model)
    names = args.check or list(CHECKS)
    reports = run_checks(model, names, args.tol, args.claims_both_orderings)
    _emit([r.to_json() for r in reports], args.out)
    return _exit_code(reports)


def cmd_polytope(args) -> int:
    if (args.table is None) == (args.fixture is None):
        raise InputError("give exactly one of a correlation file or --fixture")
    table = POLYTOPE_FIXTURES[args.fixture]() if args.fixture else load_table(args.table)
    result = is_local(table, args.tol)
    _emit([json.dumps(result.to_dict())], args.out)
    return EXIT_OK if result.local else EXIT_FAIL


class _Pair(BaseModel):
    model_config = ConfigDict(extra="forbid")
    a: float
    b: float


class ScenarioFile(BaseModel):
    """Schema for ``simulate`` scenario documents."""

    model_config = ConfigDict(extra="forbid")
    model: Optional[str] = None  # model file path or "fixture:<spec>"; absent -> quantum
    settings: Optional[list[_Pair]] = None
    thetas: Optional[list[float]] = None
    degrees: bool = False
    trials: int
    seed: int = 0
    z: float = 4.0
    compare_to: str = "source"
    workers: Optional[int] = None
    checks: list[str] = []
    tol: float = 1e-9

    @field_validator("trials")
    @classmethod
    def _positive_trials(cls, v):
        if v < 1:
            raise ValueError("trials must be >= 1")
        return v

    @field_validator("compare_to")
    @classmethod
    def _known_target(cls, v):
        if v not in ("source", "quantum", "uniform"):
            raise ValueError("compare_to must be source, quantum or uniform")
        return v

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, v):
        unknown = [c for c in v if c not in CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}")
        return v

    @model_validator(mode="after")
    def _one_settings_form(self):
        if (self.settings is None) == (self.thetas is None):
            raise ValueError("give exactly one of 'settings' or 'thetas'")
        return self


def load_scenario(path) -> ScenarioFile:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read scenario: {exc}") from None
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise InputError(f"invalid scenario: {exc}") from None


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    deg = sc.degrees or args.degrees
    if sc.thetas is not None:
        pairs = [SettingPair.from_theta(_angle(t, deg)) for t in sc.thetas]
    else:
        pairs = [SettingPair(_angle(p.a, deg), _angle(p.b, deg)) for p in sc.settings]

    if sc.model is None:
        source = QUANTUM
    elif sc.model.startswith("fixture:"):
        wing1 = sorted({p.a.angle for p in pairs})
        wing2 = sorted({p.b.angle for p in pairs})
        source = parse_fixture(sc.model[len("fixture:"):], wing1, wing2)
    else:
        source = load_model(Path(args.scenario).parent / sc.model)

    seed = args.seed if args.seed is not None else sc.seed
    config = SimulationConfig(seed=seed, trials=sc.trials, settings=pairs, source=source)
    workers = args.workers if args.workers is not None else sc.workers
    table = simulate(config, workers=workers)

    if sc.compare_to == "uniform":
        analytic = lambda s, r, q: 0.25  # noqa: E731
    elif sc.compare_to == "quantum" or source == QUANTUM:
        analytic = singlet_joint
    else:
        analytic = lambda s, r, q: model_quantum_joint(source, s, r, q)  # noqa: E731
    reports = [compare(table, analytic, sc.z)]
    if sc.checks:
        if source == QUANTUM:
            raise InputError("checks need a model source")
        reports += run_checks(source, sc.checks, sc.tol)

    csv = table.to_csv()
    lines = [r.to_json() for r in reports]
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
        sys.stdout.write("".join(line + "\n" for line in lines))
    else:
        sys.stdout.write(csv)
        for line in lines:
            sys.stderr.write(line + "\n")
    return _exit_code(reports)


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-9, help="audit tolerance (default 1e-9)")
    common.add_argument("--seed", type=int, default=None, help="override the simulation seed")
    common.add_argument("--out", default=None, help="write the main output to this file")
    common.add_argument("--degrees", action="store_true", help="angles are given in degrees")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bell-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("quantum", parents=[common], help="singlet probability tables (CSV)")
    p.add_argument("--theta", type=float, nargs="+", required=True,
                   help="angle(s) between the analyzers")
    p.add_argument("--conditional", action="store_true", help="add P(q | r) column")
    p.add_argument("--r", type=int, choices=(1, -1), default=None)
    p.add_argument("--q", type=int, choices=(1, -1), default=None)
    p.set_defaults(func=cmd_quantum)

    p = sub.add_parser("audit", parents=[common], help="locality audits (JSON lines)")
    p.add_argument("model", nargs="?", help="model file (JSON)")
    p.add_argument("--fixture", help="built-in model: sign-model:N or singlet-od")
    p.add_argument("--check", action="append", choices=list(CHECKS),
                   help="check to run (repeatable; default all)")
    p.add_argument("--wing1", type=float, nargs="+", help="fixture settings on wing 1")
    p.add_argument("--wing2", type=float, nargs="+", help="fixture settings on wing 2")
    p.add_argument("--claims-both-orderings", action="store_true",
                   help="the model claims the conditional identity in both measurement orders")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("polytope", parents=[common], help="local-polytope membership (JSON)")
    p.add_argument("table", nargs="?", help="correlation file (JSON)")
    p.add_argument("--fixture", choices=list(POLYTOPE_FIXTURES))
    p.set_defaults(func=cmd_polytope)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run (CSV + JSON report)")
    p.add_argument("scenario", help="scenario file (JSON)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: BELL_LAB_THREADS, 0 = auto)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (InputError, BellLabError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
