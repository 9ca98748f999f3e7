"""Executes candidate module texts and reports which ones build and run their block.

stdin: JSON list of {"id", "text", "block", "ctor", "inputs"}; ctor and inputs are
Python expressions evaluated with torch in scope and must yield tuples.
stdout: JSON list of {"id", "ok", "error"}.
"""
import json
import sys

import torch


def run(case):
    ns = {"__name__": "oracle_" + case["id"].replace(".", "_")}
    try:
        exec(compile(case["text"], case["id"], "exec"), ns)
        block = ns[case["block"]]
        env = {"torch": torch}
        model = block(*eval(case["ctor"], env))
        model(*eval(case["inputs"], env))
        return {"id": case["id"], "ok": True, "error": ""}
    except BaseException as e:  # the oracle reports, never raises
        return {"id": case["id"], "ok": False, "error": type(e).__name__ + ": " + str(e)[:200]}


def main():
    torch.manual_seed(0)
    cases = json.load(sys.stdin)
    print(json.dumps([run(c) for c in cases]))


if __name__ == "__main__":
    main()
