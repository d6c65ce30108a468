"""Smoke test of the g2flow Python bindings.

Build the extension first, for example with
    cargo build --release -p g2flow-py --features extension-module
The script imports g2flow_py from the path, or from target/release when it is not installed.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys


def load_module():
    try:
        import g2flow_py

        return g2flow_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libg2flow_py.so", "libg2flow_py.dylib", "g2flow_py.dll"):
            lib = root / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("g2flow_py", str(lib))
                spec = importlib.util.spec_from_loader("g2flow_py", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                return module
    sys.exit("g2flow_py extension not found; build it with the extension-module feature")


def main():
    g2 = load_module()
    assert abs(g2.nu0() - (math.sqrt(145) - 7) / 2) < 1e-12
    assert abs(g2.nu_inf() - (math.sqrt(145) + 7) / 2) < 1e-12
    assert g2.eval_f(1.0, 3.0, -1.0, 4.0)[0] == 87.0
    c = math.sqrt(3) / 54
    assert abs(g2.hamiltonian(c, c, 3 * c, 3 * c, 0.0, 0.0)) < 1e-15

    verdicts = {}
    for value in (-1.0, 0.0, 1.0):
        v = json.loads(g2.classify(json.dumps({"family": "cs", "c": value})))
        verdicts[value] = v["kind"]["kind"]
    print("cs verdicts:", verdicts)
    assert verdicts == {-1.0: "Incomplete", 0.0: "AC", 1.0: "ALC"}, verdicts

    beta_ac, c_ac, beta_closure, cross = g2.find_ac(1, 2)
    print(f"K(1,2): beta_ac = {beta_ac:.10f}, c_ac = {c_ac:.6e}, cross residual = {cross:.2e}")
    assert cross is not None and cross < 1e-3

    try:
        g2.classify(json.dumps({"family": "bogus"}))
    except ValueError as e:
        print("config error raised:", e)
    else:
        raise AssertionError("expected ValueError")

    checks = g2.verify(quick=True)
    assert all(passed for _, _, passed, _ in checks), checks
    print(f"{len(checks)} quick checks passed")


if __name__ == "__main__":
    main()
