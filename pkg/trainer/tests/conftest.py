import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def tiny_workspace(tmp_path_factory):
    """Grammar plus small datasets exported through the primary CLI."""
    root = tmp_path_factory.mktemp("artifacts")
    grammar = root / "g.json"

    def hibp(*args):
        proc = subprocess.run(
            [sys.executable, "-m", "hibp.cli", *map(str, args)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        return proc.stdout

    hibp("grammar-gen", "--q", 4, "--sigma", 1.0, "--seed", 7, "--out", grammar)
    hibp("dataset", "--grammar", grammar, "--ell", 2, "--k", 0, "--P", 512,
         "--task", "classification", "--seed", 21, "--out", root / "cls")
    hibp("dataset", "--grammar", grammar, "--ell", 2, "--k", 0, "--P", 512,
         "--task", "mlm", "--seed", 22, "--out", root / "mlm")
    hibp("dataset", "--grammar", grammar, "--ell", 2, "--k", 2, "--P", 256,
         "--task", "mlm", "--seed", 23, "--out", root / "mlm_k2")
    hibp("sample", "--grammar", grammar, "--ell", 2, "--k", 0, "--seed", 22,
         "--count", 512, "--out", root / "trees.u8")
    hibp("eval-grid", "--grammar", grammar, "--ell", 2, "--task", "classification",
         "--n", 500, "--seed", 3, "--out", root / "grid_cls.csv")
    return root
