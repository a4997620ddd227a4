"""Smoke test for the pyfloquet extension.

Uses an installed `pyfloquet` if present, otherwise loads the cdylib from
target/{release,debug} (build it with
`cargo build -p floquet-spectral-py --features extension-module`).
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import pyfloquet

        return pyfloquet
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyfloquet.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp()) / "pyfloquet.so"
            shutil.copy(lib, tmp)
            spec = importlib.util.spec_from_file_location("pyfloquet", tmp)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("pyfloquet not found; build the extension first")


def main():
    pf = load()

    free = pf.Operator.free(1)
    rho = free.multipliers(0.25)
    assert all(abs(abs(r) - 1.0) < 1e-10 for r in rho), rho
    assert min(abs(r - 1j) for r in rho) < 1e-10

    spec = free.spectrum(-0.5, 10.0)
    assert abs(spec[0][0]) < 1e-8 and abs(spec[-1][1] - 10.0) < 1e-12, spec

    m = pf.Operator.mathieu(1.0)
    edges = m.fourier_edges(6)
    bands = [e for iv in m.spectrum(-1.0, 20.0) for e in iv][:6]
    assert max(abs(a - b) for a, b in zip(edges, bands)) < 1e-6, (edges, bands)

    lhs, rhs, rel = m.parseval(-1.0, 60.0, mesh_n=8)
    assert rel < 1e-3, (lhs, rhs, rel)

    sm = m.spectral_matrix(3.0, -1.0, 20.0)
    assert all(abs(sm[i][j] - sm[j][i].conjugate()) < 1e-10 for i in range(2) for j in range(2))

    doc = '{"n": 1, "coefficients": [[{"m": 1, "re": 1.0}, {"m": -1, "re": 1.0}]]}'
    assert pf.Operator.parse(doc).fourier_edges(3) == m.fourier_edges(3)

    try:
        pf.Operator.free(0)
    except ValueError:
        pass
    else:
        raise AssertionError("free(0) accepted")

    assert pf.run(["no-such-command"]) == 2
    print(f"pyfloquet ok: edges {edges[:3]}, parseval rel {rel:.2e}")


if __name__ == "__main__":
    main()
