#!/usr/bin/env python3
"""End-to-end checks of the dosesens binary: schema, determinism, exit codes."""

import argparse
import json
import os
import subprocess
import sys
import tempfile

import jsonschema


def run(tool, args, expect=0):
    p = subprocess.run([tool, *args], capture_output=True, text=True)
    if p.returncode != expect:
        raise AssertionError(f"{' '.join(args)}: exit {p.returncode}, expected {expect}\n{p.stderr}")
    return p.stdout


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tool", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--data", required=True)
    a = ap.parse_args()

    with open(a.schema) as fh:
        schema = json.load(fh)
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    d = a.data
    tmp = tempfile.mkdtemp(prefix="dosesens_cli_")

    commands = {
        "validate": ["validate", "-i", d, "--tv", os.path.join(tmp, "tv.csv"), "--gamma", "1"],
        "sharp-normal": ["sharp-null", "-i", d, "--gamma", "0", "0.25", "0.5", "1",
                         "--curve", os.path.join(tmp, "curve.csv")],
        "sharp-mc": ["sharp-null", "-i", d, "--gamma", "0", "--stat", "t", "--method", "exact-mc",
                     "--reps", "10000", "--seed", "7"],
        "tae-test": ["tae", "-i", d, "--gamma", "0.5", "--delta", "10", "--solver", "bnb"],
        "tae-ci": ["tae", "-i", d, "--gamma", "0.5", "--ci", "--solver", "bnb"],
        "design-sens": ["design-sens", "--mc-draws", "2000", "--dgp",
                        '{"f": "power:0.25", "beta": 1.5, "dose_law": "unif", "effect_mean": 0}'],
        "power": ["power", "--Gamma", "1", "1.5", "--sets", "200", "--sim-reps", "20",
                  "--curve", os.path.join(tmp, "power.csv")],
        "balance": ["balance", "-i", d, "--perm-reps", "200", "--csv", os.path.join(tmp, "bal.csv")],
        "demo-hardness": ["demo-hardness", "--program", os.path.join(tmp, "program.txt")],
        "demo-hardness-gamma0": ["demo-hardness", "--gamma", "0"],
    }
    failures = 0
    reports = {}
    for name, args in commands.items():
        try:
            out = run(a.tool, args)
            rep = json.loads(out)
            validator.validate(rep)
            reports[name] = (args, out, rep)
            print(f"ok   {name}")
        except (AssertionError, json.JSONDecodeError, jsonschema.ValidationError) as e:
            failures += 1
            print(f"FAIL {name}: {e}")

    def check(label, cond):
        nonlocal failures
        print(("ok   " if cond else "FAIL ") + label)
        failures += 0 if cond else 1

    if "sharp-mc" in reports:
        args, out, _ = reports["sharp-mc"]
        check("sharp-null rerun is byte-identical", run(a.tool, args) == out)
        threaded = json.loads(run(a.tool, args + ["--threads", "2"]))
        check("result independent of --threads", threaded["result"] == reports["sharp-mc"][2]["result"])
    if "demo-hardness" in reports:
        check("counterexample passes", reports["demo-hardness"][2]["result"]["pass"] is True)
    if "demo-hardness-gamma0" in reports:
        check("gamma 0 skips the check", reports["demo-hardness-gamma0"][2]["result"]["skipped"] is True)
    for f in ("tv.csv", "curve.csv", "power.csv", "bal.csv", "program.txt"):
        p = os.path.join(tmp, f)
        check(f"wrote {f}", os.path.exists(p) and os.path.getsize(p) > 0)

    # usage and data errors
    try:
        run(a.tool, ["sharp-null", "--gamma", "0"], expect=2)
        run(a.tool, ["nonsense"], expect=2)
        bad = os.path.join(tmp, "bad.csv")
        with open(bad, "w") as fh:
            fh.write("set_id,dose,outcome\na,0.5,1\n")
        run(a.tool, ["validate", "-i", bad], expect=1)
        # the bundled data has sets contributing more than one unit above the threshold
        run(a.tool, ["tae", "-i", d, "--delta", "10", "--solver", "separability"], expect=1)
        check("exit codes", True)
    except AssertionError as e:
        check(f"exit codes: {e}", False)

    print(f"{failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
