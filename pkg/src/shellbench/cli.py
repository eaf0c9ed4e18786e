"""Command-line front end.

Exit codes: 0 success, 1 solver or benchmark failure, 2 invalid input,
3 invalid geometry.  Output files are written only after all computation
has finished, each through a temporary file and an atomic rename.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from pathlib import Path

from .assembly import symmetrize_normals
from .element import Formulation
from .errors import (
    BenchmarkError,
    ConstraintError,
    GeometryError,
    InvalidArgumentError,
    ParseError,
    ShellBenchError,
    SolverError,
)
from .girkmann import (
    QUANTITIES,
    SHELL_REFERENCE,
    GirkmannConstants,
    build_mesh,
    convergence_table,
    run_benchmark,
)
from .mesh import SurfaceMesh, compute_nodal_normals, generate_quarter_cap_regular, perturb
from .msh import format_msh, format_normals, parse_msh, parse_normals

log = logging.getLogger("shellbench")

EXIT_SOLVER, EXIT_INPUT, EXIT_GEOMETRY = 1, 2, 3
FORMULATIONS = ("disp4", "mitc4c", "mitc4s")
DEFAULT_ALPHA = 0.2


def fmt(x) -> str:
    """Six significant digits, independent of locale."""
    return format(float(x), ".6g")


def thread_cap() -> int:
    raw = os.environ.get("SHELLBENCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"SHELLBENCH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgumentError("SHELLBENCH_THREADS must be at least 1")
    return n


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def parse_n_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or comma-separated integers, got {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("N values must be positive")
    return values


def positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0.0:
        raise argparse.ArgumentTypeError("stabilization parameter must be positive")
    return v


def load_mesh_file(path: str) -> SurfaceMesh:
    """Import an MSH file; normals come from a ``.normals`` sidecar if present."""
    p = Path(path)
    try:
        mesh = parse_msh(p.read_bytes())
        sidecar = p.with_suffix(".normals")
        if sidecar.exists():
            return mesh.with_normals(parse_normals(sidecar.read_text(encoding="ascii"), mesh.n_nodes))
    except OSError as exc:
        raise InvalidArgumentError(f"{path}: {exc.strerror}") from None
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return compute_nodal_normals(mesh, "averaged")


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(args) -> int:
    if args.import_path:
        mesh = load_mesh_file(args.import_path)
    else:
        mesh = generate_quarter_cap_regular(args.n[0])
        magnitude = args.perturb if args.perturb is not None else (args.magnitude if args.mesh == "perturbed" else 0.0)
        if magnitude:
            mesh = perturb(mesh, magnitude, args.seed)
    out = Path(args.out)
    stem = args.name
    write_atomic(out / f"{stem}.msh", format_msh(mesh))
    write_atomic(out / f"{stem}.normals", format_normals(mesh))
    print(f"{mesh.n_elements} elements, {mesh.n_nodes} nodes -> {out / (stem + '.msh')}")
    return 0


def _mesh_for(args, n: int, constants: GirkmannConstants) -> SurfaceMesh:
    if args.mesh == "file":
        if not args.mesh_file:
            raise InvalidArgumentError("--mesh file needs --mesh-file PATH")
        return symmetrize_normals(load_mesh_file(args.mesh_file))
    return build_mesh(n, args.mesh, args.seed, args.magnitude, constants)


def cmd_benchmark(args) -> int:
    if len(args.n) != 1:
        raise InvalidArgumentError("benchmark takes a single N")
    n = args.n[0]
    constants = GirkmannConstants()
    formulation = Formulation.from_name(args.formulation, args.stabilize)
    mesh = _mesh_for(args, n, constants)
    result = run_benchmark(mesh, formulation, constants)

    norm = result.shell.normalized(SHELL_REFERENCE)
    rows = [
        ("formulation", formulation.key),
        ("N", str(n)),
        ("elements", str(mesh.n_elements)),
        ("R_N_per_m", fmt(result.reactions.R)),
        ("M_Nm_per_m", fmt(result.reactions.M)),
        ("Q_N_per_m", fmt(result.reactions.Q)),
    ]
    rows += [(f"residual_case{k}", fmt(v)) for k, v in result.residuals.items()]
    rows += [(f"shell_{q}", fmt(getattr(result.shell, q))) for q in QUANTITIES]
    rows += [(f"shell_{q}_normalized", fmt(norm[q])) for q in QUANTITIES]
    rows += [(f"ring_{q}", fmt(getattr(result.ring, q))) for q in QUANTITIES]
    profile_header = ("colatitude_deg", "m11_Nm_per_m")

    out = Path(args.out)
    write_atomic(out / "report.csv", to_csv(("quantity", "value"), rows))
    for edge, prof in result.profiles.items():
        name = "profile.csv" if edge == "left" else f"profile_{edge}.csv"
        write_atomic(out / name, to_csv(profile_header, [(fmt(a), fmt(b)) for a, b in prof]))
    print(f"R = {fmt(result.reactions.R)} N/m")
    print(f"M = {fmt(result.reactions.M)} N m/m")
    print(f"Q = {fmt(result.reactions.Q)} N/m")
    print(f"normalized k11 = {fmt(norm['k11'])}")
    return 0


def _formulations(args) -> list[Formulation]:
    if args.formulation == "all":
        alpha = args.stabilize or DEFAULT_ALPHA
        return [
            Formulation.from_name("disp4"),
            Formulation.from_name("mitc4c"),
            Formulation.from_name("mitc4s"),
            Formulation.from_name("mitc4c", alpha),
            Formulation.from_name("mitc4s", alpha),
        ]
    return [Formulation.from_name(args.formulation, args.stabilize)]


def cmd_convergence(args) -> int:
    if args.mesh == "file":
        raise InvalidArgumentError("convergence needs generated meshes (regular or perturbed)")
    rows = convergence_table(
        _formulations(args),
        args.n,
        kind=args.mesh,
        seed=args.seed,
        magnitude=args.magnitude,
        workers=thread_cap(),
    )
    text = to_csv(
        ("formulation", "N", "quantity", "raw", "normalized"),
        [(f, str(n), q, fmt(raw), fmt(nv)) for f, n, q, raw, nv in rows],
    )
    write_atomic(Path(args.out) / "convergence.csv", text)
    print(f"{len(rows)} rows -> {Path(args.out) / 'convergence.csv'}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shellbench", description="Shell elements on the Girkmann dome.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_help, default_n):
        p.add_argument("--n", type=parse_n_list, default=[default_n], help=n_help)
        p.add_argument("--mesh", choices=("regular", "perturbed", "file"), default="regular")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--magnitude", type=float, default=0.25, help="perturbation size, fraction of edge length")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("mesh", help="write a quarter-cap mesh (MSH 2.2) and its normals")
    common(p, "elements per patch edge (3 N^2 elements)", 8)
    p.add_argument("--perturb", type=float, default=None, metavar="MAG", help="perturb interior nodes by MAG")
    p.add_argument("--import", dest="import_path", default=None, metavar="FILE", help="re-export an MSH file")
    p.add_argument("--name", default="mesh", help="output file stem")
    p.set_defaults(func=cmd_mesh)

    for name, func, helptext in (
        ("benchmark", cmd_benchmark, "full pipeline: compliances, ring, reactions, profiles"),
        ("convergence", cmd_convergence, "compliance convergence table"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p, "elements along each side of the quarter cap (even)", 32)
        choices = FORMULATIONS + (("all",) if name == "convergence" else ())
        p.add_argument("--formulation", choices=choices, default="mitc4c")
        p.add_argument(
            "--stabilize",
            type=positive_float,
            nargs="?",
            const=DEFAULT_ALPHA,
            default=None,
            metavar="ALPHA",
            help=f"shear stabilization parameter (default {DEFAULT_ALPHA} when given without a value)",
        )
        p.add_argument("--mesh-file", default=None, help="MSH file for --mesh file")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (SolverError, BenchmarkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (InvalidArgumentError, ParseError, ConstraintError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ShellBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
