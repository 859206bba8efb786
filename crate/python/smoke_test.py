"""Smoke test for the lscheme extension module.

Build and install first, for example
    pip install --no-build-isolation ./crates/python
or
    cargo build --release -p lscheme-python --features extension-module
    cp target/release/liblscheme.so python/lscheme.so
"""

import math
import sys

import lscheme


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    cell = lscheme.Mesh.cell(24, 0.4)
    results.append(check("cell mesh area", abs(cell.area - (1 - math.pi * 0.16)) < 0.01, f"{cell.area:.5f}"))
    back = lscheme.Mesh.from_text(cell.to_text())
    results.append(check("mesh text round trip", back.node_count == cell.node_count))

    t = lscheme.homogenized_tensor(cell_n=48)
    results.append(check("homogenized tensor", abs(t.a0[0][0] - 0.19) < 0.01 and abs(t.a0[0][1]) < 1e-10, repr(t)))

    setup = lscheme.Setup(n_per_cell=8, cell_n=32, macro_n=32)
    micro = setup.micro(0.5)
    newton = setup.newton(0.5)
    diff = max(abs(a - b) for a, b in zip(micro.values, newton.values))
    results.append(check("micro L-scheme converges", micro.converged, f"{micro.iterations} iterations"))
    results.append(check("ratios below one", all(r < 1 for r in micro.ratios)))
    results.append(check("newton agrees", diff < 1e-5, f"max diff {diff:.2e}"))

    zero = lscheme.Setup(n_per_cell=8, source=0.0).micro(0.5)
    results.append(check("zero source", all(v == 0.0 for v in zero.values)))

    macro = setup.macro_()
    results.append(check("macro L-scheme converges", macro.converged))

    report = setup.table2(0.5, [1, 2])
    results.append(check("table2", report.csv.startswith("epsilon,k,") and len(report.rows) == 2))

    try:
        setup.micro(0.3)
        results.append(check("epsilon 0.3 rejected", False))
    except ValueError as e:
        results.append(check("epsilon 0.3 rejected", True, str(e)))

    results.append(check("format_sig", lscheme.format_sig(1234567.0) == "1.23457e6"))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
