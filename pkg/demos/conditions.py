"""Run every condition checker on the fixture models and print the verdicts."""
from levyasym.catalog import fixtures
from levyasym.hypotheses import check_all

cids = None
for fx in fixtures():
    reports = check_all(fx.model)
    if cids is None:
        cids = [r.cid for r in reports]
        print(f"{'model':6}" + "".join(f"{c:>7}" for c in cids))
    marks = []
    for r in reports:
        v = {"holds": "+", "fails": "-", "inconclusive": "?"}[r.verdict]
        ok = r.verdict == fx.truth[r.cid] or r.verdict == "inconclusive"
        marks.append(v if ok else v + "!")
    print(f"{fx.name:6}" + "".join(f"{m:>7}" for m in marks))
print("\n+ holds, - fails, ? inconclusive, ! disagrees with the known verdict")
