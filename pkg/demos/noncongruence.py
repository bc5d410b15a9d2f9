"""Pairs that are bisimilar alone but not inside a larger process."""

from qpalg import check_process_equiv
from qpalg.cli import fixture_path, parse_context
from qpalg.syntax import parse_program

FAMILIES = {
    "noncongruence_hadamard": ["x=mixed"],
    "noncongruence_prob": ["x=mixed"],
    "noncongruence_restrict": ["x=0", "x=7"],
    "noncongruence_epr": ["x,y=epr"],
}

for name, specs in FAMILIES.items():
    d = parse_program(fixture_path(name).read_text()).definitions
    family = [parse_context(s) for s in specs]
    rows = []
    for a, b in (("Left", "Right"), ("LeftComposed", "RightComposed")):
        plain = check_process_equiv(d[a].body, d[b].body, family, d, rooted=False)
        rooted = check_process_equiv(d[a].body, d[b].body, family, d, rooted=True)
        rows.append(f"{a}/{b}: plain={plain.holds} rooted={rooted.holds}")
    print(f"{name} over {specs}")
    for row in rows:
        print("   " + row)
