"""Command-line driver.

Exit status: 0 success, 2 the element lies in the subgroup, 3 unreadable or
invalid input, 4 a search bound was exhausted (or a verdict is unknown).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import sympy

from .errors import IceSepError, MemberError, ParseError, SearchExhausted, ValidationError
from .gice import GiceChain, confirm_retraction, discriminate
from .hn import hn_check
from .lattice import Lattice, separate_abelian
from .effsep import DefiningPolys, MatrixRep, mod_p_separate, quotient_growth
from .precover import separate
from .stallings import contains, core_graph
from .tower import abelianize, load_tower, normalize_chain, oracle_membership
from .words import Word

log = logging.getLogger("icesep")

EXIT_OK, EXIT_MEMBER, EXIT_PARSE, EXIT_EXHAUSTED = 0, 2, 3, 4


@dataclass
class RunConfig:
    command: str
    path: Path
    degree_cap: int = 64
    bound: int = 8
    out: Path | None = None
    emit_dot: Path | None = None

    def __post_init__(self):
        if self.degree_cap < 1 or self.bound < 1:
            raise ValidationError("degree cap and bounds must be positive")


def _emit(cfg: RunConfig, name: str, text: str) -> None:
    sys.stdout.write(text)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / name).write_text(text)


def _lines(path: Path) -> list[str]:
    out = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def cmd_separate(cfg: RunConfig) -> int:
    prob = load_tower(cfg.path)
    cert = separate(prob.tower, prob.subgroup, prob.element, degree_cap=cfg.degree_cap,
                    choices=prob.choices)
    if cfg.emit_dot is not None:
        cert.write_dot(cfg.emit_dot)
    _emit(cfg, "report.txt", cert.report())
    return EXIT_OK if not cert.check() else EXIT_EXHAUSTED


def cmd_member(cfg: RunConfig) -> int:
    prob = load_tower(cfg.path)
    tower = normalize_chain(prob.tower)
    lines = []
    status = EXIT_OK
    for w in prob.elements:
        if tower.height == 0:
            verdict = "member" if contains(core_graph(prob.subgroup, tower.base), w) else "non-member"
        else:
            v = oracle_membership(tower, prob.subgroup, w, bound=cfg.bound)
            verdict = f"{v.status} ({v.reason})"
            if v.status == "unknown":
                status = EXIT_EXHAUSTED
        lines.append(f"{w}: {verdict}")
    _emit(cfg, "member.txt", "\n".join(lines) + "\n")
    return status


def cmd_abelian(cfg: RunConfig) -> int:
    prob = load_tower(cfg.path)
    tower = normalize_chain(prob.tower)
    if not (len(tower.base) == 1 and tower.height <= 1):
        raise ValidationError("abelian-sep needs a free abelian tower (one base generator, height <= 1)")
    n = len(tower.alphabet)
    H = Lattice.from_rows([abelianize(tower, h) for h in prob.subgroup], n)
    K = separate_abelian(n, H, abelianize(tower, prob.element))
    text = f"coordinates {' '.join(tower.alphabet)}\nindex {K.index}\n" + K.to_text()
    _emit(cfg, "lattice.txt", text)
    return EXIT_OK


def _read_discriminate(path: Path) -> tuple[GiceChain, list[Word]]:
    chain_lines, S = [], []
    for line in _lines(path):
        if line.startswith("word "):
            S.append(Word.parse(line[5:]))
        else:
            chain_lines.append(line)
    return GiceChain.from_text("\n".join(chain_lines)), S


def cmd_discriminate(cfg: RunConfig) -> int:
    chain, S = _read_discriminate(cfg.path)
    psi = discriminate(chain, S, bound=cfg.bound)
    lines = [f"level {psi.level}"]
    for name in chain.symbols():
        if name not in chain.base:
            lines.append(f"{name} -> {psi.images[name]}")
    for s in S:
        lines.append(f"image {s} -> {psi(s)}")
    if set(chain.base) == {"a", "b"}:
        lines.append("matrix check " + ("PASS" if confirm_retraction(chain, psi, S) else "FAIL"))
    _emit(cfg, "retraction.txt", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_hn(cfg: RunConfig) -> int:
    U = W = None
    for line in _lines(cfg.path):
        head, _, rest = line.partition(" ")
        words = [Word.parse(x) for x in rest.split(",") if x.strip()]
        if head == "U":
            U = words
        elif head == "W":
            W = words
        else:
            raise ParseError(f"unknown directive {head!r}")
    if U is None or W is None:
        raise ParseError("need both U and W lines")
    _emit(cfg, "hn.txt", hn_check(U, W).to_text())
    return EXIT_OK


def _read_quotient(path: Path):
    n, gens, polys, family, group_count = None, {}, [], [], 0
    for line in _lines(path):
        head, _, rest = line.partition(" ")
        if head == "dim":
            n = int(rest)
        elif head == "gen":
            name, _, rows = rest.partition(" ")
            gens[name] = [[int(x) for x in r.split()] for r in rows.split("/")]
        elif head == "poly":
            polys.append(rest)
        elif head == "group_polys":
            group_count = int(rest)
        elif head == "element":
            family.append(Word.parse(rest))
        elif head == "family":
            template, lo, hi = rest.split()
            family += [Word.parse(template.replace("{k}", str(k))) for k in range(int(lo), int(hi) + 1)]
        else:
            raise ParseError(f"unknown directive {head!r}")
    if n is None:
        raise ParseError("missing 'dim'")
    rep = MatrixRep(n, {k: sympy.Matrix(v) for k, v in gens.items()})
    return rep, DefiningPolys.parse(polys, n, group_count), family


def cmd_quotient(cfg: RunConfig) -> int:
    rep, polys, family = _read_quotient(cfg.path)
    if len(family) == 1:
        _emit(cfg, "quotient.txt", mod_p_separate(rep, polys, family[0]).to_text())
        return EXIT_OK
    table = quotient_growth(rep, polys, family)
    _emit(cfg, "growth.csv", table.to_csv())
    sys.stderr.write(f"slope {table.slope:.6f} max|residual| {max(map(abs, table.residuals)):.3e}\n")
    return EXIT_OK


COMMANDS = {
    "separate": cmd_separate,
    "member": cmd_member,
    "abelian-sep": cmd_abelian,
    "discriminate": cmd_discriminate,
    "hn": cmd_hn,
    "quotient": cmd_quotient,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icesep", description="Subgroup separation in ICE groups.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("path", type=Path)
    p.add_argument("--degree-cap", type=int, default=64)
    p.add_argument("--bound", type=int, default=8)
    p.add_argument("--emit-dot", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.command](cfg)
    except MemberError as e:
        sys.stderr.write(f"member: {e}\n")
        return EXIT_MEMBER
    except (ParseError, ValidationError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_PARSE
    except SearchExhausted as e:
        sys.stderr.write(f"exhausted: {e}\n")
        return EXIT_EXHAUSTED
    except IceSepError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_PARSE


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.command, args.path, args.degree_cap, args.bound, args.out, args.emit_dot)
    except ValidationError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_PARSE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
