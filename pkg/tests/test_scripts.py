import importlib.util
from pathlib import Path

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def load(name):
    spec = importlib.util.spec_from_file_location(name, SCRIPTS / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_reproduce_tables_script(tmp_path):
    args = ["--tables", "table3", "--sizes", "60", "--replications", "2", "--validation-size", "200", "--out", str(tmp_path)]
    assert load("reproduce_tables").main(args) == 0
    assert (tmp_path / "table3.csv").exists() and (tmp_path / "table3.txt").exists()


def test_coverage_script(tmp_path):
    out = tmp_path / "cov.csv"
    assert load("coverage_experiment").main(["--sizes", "100", "--taus", "0.5", "--reps", "3", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "n,tau,coefficient,coverage,mean_width" and len(rows) == 5


def test_actg_model_spec():
    mod = load("actg175_analysis")
    spec = mod.model_spec()
    assert spec.baseline_map.dim == 13 and spec.contrast_map.dim == 4
