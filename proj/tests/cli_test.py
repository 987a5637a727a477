#!/usr/bin/env python3
"""End-to-end checks of the multiscreen command line: exit codes, schema, determinism."""

import argparse
import csv
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema

failures = []
checks = 0


def check(cond, what):
    global checks
    checks += 1
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(cli, *args, env=None):
    full_env = dict(os.environ)
    full_env.pop("MULTISCREEN_THREADS", None)
    if env:
        full_env.update(env)
    return subprocess.run([cli, *map(str, args)], capture_output=True, text=True, env=full_env)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--work", required=True)
    a = ap.parse_args()

    cli = a.cli
    data = Path(a.data)
    work = Path(a.work)
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    validator = jsonschema.Draft202012Validator(json.loads(Path(a.schema).read_text()))

    def ok(name, *args, env=None):
        out = work / name
        p = run(cli, *args, "--out", out, env=env)
        check(p.returncode == 0, f"{name}: exit 0 (stderr: {p.stderr.strip()[:200]})")
        res = out / "result.json"
        if res.exists():
            errs = list(validator.iter_errors(json.loads(res.read_text())))
            check(not errs, f"{name}: result.json matches schema"
                  + ("" if not errs else f" ({errs[0].message[:160]})"))
        else:
            check(False, f"{name}: result.json written")
        return out

    # data fixtures
    exp = ok("export", "export", "--setting", 2, "--p", 200, "--seed", 7)
    manifest = exp / "manifest.json"
    ej = json.loads((exp / "result.json").read_text())
    check(len(ej["results"]["true_active"]) == 10, "export: ten true features")
    check(sorted(p.name for p in exp.glob("study*.csv")) == [f"study{k}.csv" for k in range(1, 6)],
          "export: five study files")

    # golden two-step example
    t1 = ok("example", "screen", "--stats", data / "two_step_example.csv", "--threshold", 3.09)
    kept = json.loads((t1 / "result.json").read_text())["results"]["screening"]["kept_names"]
    check(kept == ["S1", "S2"], f"example: two-step keeps S1 and S2 (got {kept})")
    with open(t1 / "records.csv", newline="") as f:
        rows = {r["name"]: r for r in csv.DictReader(f)}
    check(rows["S1"]["kappa_hat"] == "0" and rows["S2"]["kappa_hat"] == "4" and rows["N1"]["kappa_hat"] == "5",
          "example: kappa_hat 0/4/5")
    check(abs(float(rows["S2"]["l_stat"]) - 25.3126) < 1e-9, "example: S2 aggregated statistic 25.3126")
    t1o = ok("example_onestep", "screen", "--stats", data / "two_step_example.csv", "--threshold", 3.09,
             "--method", "onestep")
    kept = json.loads((t1o / "result.json").read_text())["results"]["screening"]["kept_names"]
    check(kept == ["S1"], f"example: one-step keeps only S1 (got {kept})")

    # every command on the exported data
    scr = ok("screen", "screen", "--manifest", manifest)
    ok("minsis", "screen", "--manifest", manifest, "--method", "minsis", "--d", 15)
    mins = json.loads((work / "minsis" / "result.json").read_text())["results"]["screening"]["kept"]
    check(len(mins) == 15, "minsis: --d 15 keeps 15")
    ok("multipc", "multipc", "--manifest", manifest)
    ok("select_bic", "select", "--manifest", manifest)
    ok("select_cv", "select", "--manifest", manifest, "--tune", "cv", "--grid", 20)
    ok("simulate", "simulate", "--setting", 1, "--p", 200, "--b", 4)
    ok("roc", "roc", "--setting", 1, "--p", 200, "--b", 3)
    sens = ok("sensitivity", "sensitivity", "--setting", 1, "--p", 200, "--b", 2)
    cells = json.loads((sens / "result.json").read_text())["results"]["cells"]
    check(len(cells) == 12, f"sensitivity: default grid has 12 cells (got {len(cells)})")
    with open(sens / "table.csv", newline="") as f:
        check(len(list(csv.DictReader(f))) == 12, "sensitivity: table.csv has 12 rows")

    # exported truth is recovered by screening the exported files
    sj = json.loads((scr / "result.json").read_text())["results"]["screening"]
    hit = len(set(sj["kept"]) & set(ej["results"]["true_active"]))
    check(hit >= 8, f"export round trip: screen keeps {hit} of 10 true features")

    # determinism and thread independence
    def result_bytes(name):
        return (work / name / "result.json").read_bytes()

    ok("screen_again", "screen", "--manifest", manifest)
    check(result_bytes("screen") == result_bytes("screen_again"), "screen: byte-identical rerun")
    ok("screen_t1", "--threads", 1, "screen", "--manifest", manifest)
    ok("screen_t4", "--threads", 4, "screen", "--manifest", manifest)
    ok("screen_env", "screen", "--manifest", manifest, env={"MULTISCREEN_THREADS": "3"})
    check(result_bytes("screen_t1") == result_bytes("screen_t4") == result_bytes("screen_env")
          == result_bytes("screen"), "screen: identical across thread counts and env var")
    ok("sim_t1", "--threads", 1, "simulate", "--setting", 1, "--p", 200, "--b", 4)
    ok("sim_t4", "--threads", 4, "simulate", "--setting", 1, "--p", 200, "--b", 4)
    check(result_bytes("sim_t1") == result_bytes("sim_t4") == result_bytes("simulate"),
          "simulate: identical across thread counts")
    check((work / "sim_t1" / "summary.csv").read_bytes() == (work / "simulate" / "summary.csv").read_bytes(),
          "simulate: summary.csv identical")

    # input and usage errors exit 2
    def fails(code, what, *args):
        p = run(cli, *args)
        check(p.returncode == code, f"{what}: exit {code} (got {p.returncode})")
        return p

    fails(2, "unknown flag", "screen", "--manifest", manifest, "--out", work / "e1", "--bogus")
    fails(2, "--d with tsa", "screen", "--manifest", manifest, "--d", 5, "--out", work / "e2")
    fails(2, "missing manifest", "screen", "--manifest", work / "nope.json", "--out", work / "e3")
    fails(2, "both inputs", "screen", "--manifest", manifest, "--stats", data / "two_step_example.csv",
          "--out", work / "e4")
    fails(2, "bad alpha", "screen", "--manifest", manifest, "--alpha1", 2, "--out", work / "e5")
    fails(2, "no subcommand")
    bad = work / "bad"
    shutil.copytree(exp, bad)
    lines = (bad / "study1.csv").read_text().splitlines()
    cells_row = lines[7].split(",")
    cells_row[2] = "oops"
    lines[7] = ",".join(cells_row)
    (bad / "study1.csv").write_text("\n".join(lines) + "\n")
    header = lines[0].split(",")
    p = fails(2, "bad cell", "screen", "--manifest", bad / "manifest.json", "--out", work / "e6")
    check(f"row 7, column {header[2]}" in p.stderr, f"bad cell: message names row and column ({p.stderr.strip()})")
    check(not (work / "e6").exists(), "bad cell: no output directory left behind")

    # numerical errors exit 3
    fails(3, "budget overrun", "multipc", "--manifest", manifest, "--budget", 1, "--out", work / "e7")

    print(f"\n{checks - len(failures)}/{checks} checks passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
