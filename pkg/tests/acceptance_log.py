"""Collects per-part acceptance outcomes and renders one line per criterion."""

TITLES = {
    1: "value table reproduction",
    2: "counterexample matrices",
    3: "ordering invariants on 100 random configurations",
    4: "algebraic Riccati solver",
    5: "covariance decay as N grows",
    6: "E-regime trace law and C-regime trace dip",
    7: "filter statistical consistency",
}

_parts = {}


def record(criterion, part, ok, detail=""):
    """Store one checked part of a criterion and echo it."""
    _parts.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"  criterion {criterion} / {part}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)


def summary_lines():
    out = []
    for c in sorted(_parts):
        parts = _parts[c]
        ok = all(p[1] for p in parts)
        failed = [p[0] for p in parts if not p[1]]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        out.append(f"criterion {c} [{TITLES[c]}]: {'PASS' if ok else 'FAIL'}{tail}")
    return out
