"""Configuration-driven convergence studies, table emission and the CLI."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, replace

from . import io as mio
from .analysis import (
    ErrorReport,
    boundary_data_norm,
    convergence_rate,
    l2_errors,
    triple_norm,
)
from .assembly import (
    Params,
    apply_strong_bc,
    assemble_global,
    write_matrix_market,
)
from .linsolve import ResidualError, SingularSystemError, solve
from .mesh import (
    Mesh,
    gen_lshape,
    gen_lshape_uniform,
    gen_square_crisscross,
    gen_square_uniform,
    map_to_curved_l,
    powell_sabin_refine,
    save_txt,
)
from .problems import ProblemCase, curved_l_case, lshape_case, square_case

__all__ = [
    "StudyConfig",
    "StudyReport",
    "ConfigError",
    "build_case",
    "build_mesh",
    "run_study",
    "emit_table",
    "default_configs",
    "main",
]

_FAMILIES = ("uniform", "crisscross", "powell-sabin", "curved-mapped")

_COMPATIBLE = {
    "square": ("uniform", "crisscross", "powell-sabin"),
    "lshape": ("crisscross", "powell-sabin"),
    "curved-l": ("powell-sabin", "curved-mapped"),
}


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    """One convergence study: a case, a mesh family and refinement levels."""

    case: str = "square"
    family: str = "uniform"
    levels: list = field(default_factory=lambda: [8, 16, 32, 64])
    params: Params = field(default_factory=Params)
    out_dir: str | None = None
    emit: tuple = ("markdown",)
    label: str = ""

    def __post_init__(self):
        domain = self.case.split(":")[0]
        if domain not in _COMPATIBLE:
            raise ConfigError(f"unknown case {self.case!r}")
        if domain == "lshape" and self.case not in ("lshape:1", "lshape:2", "lshape:4"):
            raise ConfigError(f"unknown case {self.case!r}")
        if domain == "curved-l" and self.case not in (
            "curved-l:1",
            "curved-l:2",
            "curved-l:4",
        ):
            raise ConfigError(f"unknown case {self.case!r}")
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown mesh family {self.family!r}")
        if self.family not in _COMPATIBLE[domain]:
            raise ConfigError(f"family {self.family!r} incompatible with {self.case!r}")
        if list(self.levels) != sorted(set(self.levels)) or not self.levels:
            raise ConfigError("levels must be non-empty and strictly increasing")
        unknown = set(self.emit) - {"csv", "markdown", "vtk", "matrixmarket"}
        if unknown:
            raise ConfigError(f"unknown emit formats {sorted(unknown)}")


@dataclass
class StudyReport:
    config: StudyConfig
    reports: list  # ErrorReport per level
    rates_u: list  # None for the first level
    rates_curl: list

    @property
    def final_rate_u(self):
        return self.rates_u[-1] if len(self.reports) > 1 else None

    @property
    def final_rate_curl(self):
        return self.rates_curl[-1] if len(self.reports) > 1 else None


def build_case(name: str, nu: float = 1.0) -> ProblemCase:
    if name == "square":
        return square_case(nu)
    domain, _, n = name.partition(":")
    if domain == "lshape":
        return lshape_case(int(n), nu)
    if domain == "curved-l":
        return curved_l_case(int(n), nu)
    raise ConfigError(f"unknown case {name!r}")


def build_mesh(case: str, family: str, level: int) -> Mesh:
    """Mesh of one refinement level; `level` is the cell count of the base
    grid. Powell-Sabin families refine a base mesh chosen to track the
    element sizes of the reference results (uniform right-angled bases for
    the square and L domains, criss-cross for the curved domain)."""
    domain = case.split(":")[0]
    if domain not in _COMPATIBLE or family not in _COMPATIBLE[domain]:
        raise ConfigError(f"family {family!r} incompatible with domain {domain!r}")
    if domain == "square":
        if family == "uniform":
            return gen_square_uniform(level)
        if family == "crisscross":
            return gen_square_crisscross(level)
        return powell_sabin_refine(gen_square_uniform(level))
    if domain == "lshape":
        if family == "crisscross":
            return gen_lshape(level)
        return powell_sabin_refine(gen_lshape_uniform(level))
    if family == "curved-mapped":
        return map_to_curved_l(gen_lshape(level))
    return powell_sabin_refine(map_to_curved_l(gen_lshape(level)))


def run_study(config: StudyConfig) -> StudyReport:
    case = build_case(config.case, config.params.nu)
    reports: list[ErrorReport] = []
    for level in config.levels:
        t0 = time.perf_counter()
        try:
            mesh = build_mesh(config.case, config.family, level)
            system = assemble_global(mesh, config.params, case)
            if config.params.formulation == "stabilised-strong":
                system = apply_strong_bc(system, mesh, case, config.params.corner_strategy)
            sol = solve(system)
            rep = l2_errors(mesh, sol, case)
            rep.triple = triple_norm(mesh, sol, config.params)
            rep.data_norm = boundary_data_norm(mesh, case, config.params)
        except Exception as exc:
            raise type(exc)(f"level {level}: {exc}") from exc
        rep.wall_ms = (time.perf_counter() - t0) * 1e3
        reports.append(rep)

        if config.out_dir is not None and "vtk" in config.emit:
            snap = mio.snapshot_from_solution(mesh, sol, case)
            mio.export_vtk(snap, f"{config.out_dir}/{_slug(config)}_L{level}.vtk")
        if config.out_dir is not None and "matrixmarket" in config.emit:
            write_matrix_market(system, f"{config.out_dir}/{_slug(config)}_L{level}.mtx")

    rates_u = [None] + [
        convergence_rate(a, b, "err_u") for a, b in zip(reports, reports[1:])
    ]
    rates_c = [None] + [
        convergence_rate(a, b, "err_curl") for a, b in zip(reports, reports[1:])
    ]
    report = StudyReport(config, reports, rates_u, rates_c)
    if config.out_dir is not None and "csv" in config.emit:
        mio.write_report_csv(report, f"{config.out_dir}/{_slug(config)}.csv")
    return report


def _slug(config: StudyConfig) -> str:
    base = config.label or f"{config.case}_{config.family}"
    return base.replace(":", "").replace(" ", "_")


def _fmt_rate(rate) -> str:
    return "" if rate is None else f" ({rate:.2f})"


def emit_table(report: StudyReport, fmt: str = "markdown") -> str:
    """Human table (markdown) or machine table (csv, full precision)."""
    if fmt == "markdown":
        lines = ["| h | err_u (rate) | err_curl (rate) |", "| --- | --- | --- |"]
        for rep, ru, rc in zip(report.reports, report.rates_u, report.rates_curl):
            lines.append(
                f"| {rep.h:.4f} | {rep.err_u:.2e}{_fmt_rate(ru)} | "
                f"{rep.err_curl:.2e}{_fmt_rate(rc)} |"
            )
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["h,err_u,rate_u,err_curl,rate_curl"]
        for rep, ru, rc in zip(report.reports, report.rates_u, report.rates_curl):
            ru_s = "" if ru is None else f"{ru:.17g}"
            rc_s = "" if rc is None else f"{rc:.17g}"
            lines.append(f"{rep.h:.17g},{rep.err_u:.17g},{ru_s},{rep.err_curl:.17g},{rc_s}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def default_configs() -> dict[str, list[StudyConfig]]:
    """Named presets reproducing the reference convergence studies."""
    sq_uni = Params(nu=1.0, L0=0.1, c_u=0.1, N_u=100.0, N_p=100.0)
    sq_other = Params(nu=1.0, L0=2.0, c_u=1.0, N_u=100.0, N_p=100.0)
    lsh = Params(nu=1.0, L0=0.5, c_u=1.0, N_u=100.0, N_p=100.0)
    curved = Params(nu=1.0, L0=0.5, c_u=0.1, N_u=100.0, N_p=100.0)
    strong_sq = replace(sq_other, formulation="stabilised-strong")
    strong_lsh = replace(lsh, formulation="stabilised-strong")

    presets: dict[str, list[StudyConfig]] = {
        "table1-uniform": [
            StudyConfig("square", "uniform", [8, 16, 32, 64], sq_uni, label="t1-uniform")
        ],
        "table1-crisscross": [
            StudyConfig("square", "crisscross", [8, 16, 32, 64], sq_other, label="t1-cc")
        ],
        "table1-ps": [
            StudyConfig("square", "powell-sabin", [8, 16, 32, 64], sq_other, label="t1-ps")
        ],
        "table2-ps-strong": [
            StudyConfig(
                "square", "powell-sabin", [8, 16, 32, 64], strong_sq, label="t2-strong"
            )
        ],
        "table3-crisscross": [
            StudyConfig(f"lshape:{n}", "crisscross", [16, 32, 64, 128], lsh, label=f"t3-n{n}")
            for n in (1, 2, 4)
        ],
        "table4-ps": [
            StudyConfig(f"lshape:{n}", "powell-sabin", [16, 32, 64, 128], lsh, label=f"t4-n{n}")
            for n in (1, 2, 4)
        ],
        "table5-corner": [
            StudyConfig(
                "lshape:1", "crisscross", [128],
                replace(strong_lsh, corner_strategy=strategy),
                label=f"t5-{strategy}",
            )
            for strategy in ("both-zero", "free", "bisector-normal")
        ]
        + [StudyConfig("lshape:1", "crisscross", [128], lsh, label="t5-nitsche")],
        "table6-ps": [
            StudyConfig(
                f"curved-l:{n}", "powell-sabin", [2, 4, 8, 16, 32, 64], curved,
                label=f"t6-n{n}",
            )
            for n in (1, 2, 4)
        ],
    }
    return presets


# ---------------------------------------------------------------------------
# command line interface


def _params_from_dict(raw: dict) -> Params:
    allowed = {
        "nu", "L0", "c_u", "N_u", "N_p", "formulation", "corner_strategy",
        "include_p_flux",
    }
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown params fields {sorted(unknown)}")
    return Params(**raw)


def _config_from_json(path: str) -> StudyConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    params = _params_from_dict(raw.pop("params", {}))
    allowed = {"case", "family", "levels", "out_dir", "emit", "label"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    if "emit" in raw:
        raw["emit"] = tuple(raw["emit"])
    return StudyConfig(params=params, **raw)


def _cmd_run(args) -> int:
    if args.preset:
        presets = default_configs()
        if args.preset not in presets:
            print(f"unknown preset {args.preset!r}; see `maxnit presets`", file=sys.stderr)
            return 2
        configs = presets[args.preset]
    else:
        configs = [_config_from_json(args.config)]
    for cfg in configs:
        if args.out is not None:
            cfg.out_dir = args.out
        if args.emit is not None:
            cfg.emit = tuple(args.emit.split(","))
            cfg.__post_init__()
        report = run_study(cfg)
        title = cfg.label or f"{cfg.case} / {cfg.family}"
        print(f"## {title}  [{cfg.params.formulation}]")
        print(emit_table(report, "markdown"))
    return 0


def _cmd_mesh(args) -> int:
    mesh = build_mesh(args.domain, args.family, args.level)
    if args.out.endswith(".vtk"):
        mio.write_mesh_vtk(mesh, args.out)
    else:
        save_txt(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return 0


def _cmd_presets(_args) -> int:
    for name, configs in default_configs().items():
        parts = ", ".join(c.label for c in configs)
        print(f"{name}: {parts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxnit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a convergence study")
    group = run_p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help="named preset (see `maxnit presets`)")
    group.add_argument("--config", help="JSON study configuration file")
    run_p.add_argument("--out", help="output directory for emitted files")
    run_p.add_argument("--emit", help="comma-separated: csv,markdown,vtk,matrixmarket")
    run_p.set_defaults(func=_cmd_run)

    mesh_p = sub.add_parser("mesh", help="generate and export a mesh")
    mesh_p.add_argument("--family", required=True, choices=_FAMILIES)
    mesh_p.add_argument("--level", required=True, type=int)
    mesh_p.add_argument("--out", required=True)
    mesh_p.add_argument("--domain", default="square", help="square | lshape | curved-l")
    mesh_p.set_defaults(func=_cmd_mesh)

    presets_p = sub.add_parser("presets", help="list preset names")
    presets_p.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SingularSystemError, ResidualError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
