"""Write the 2011-cohort base CSVs (registry totals, Istat survey, Almalaurea survey)."""
import csv
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "urnbias" / "data"

# program slug -> (ANS total M, ANS total F,
#                  istat emp M, emp F, unemp M, unemp F,
#                  alma emp M, emp F, unemp M, unemp F)
ROWS = {
    "agricultural_forestry_veterinary": (1189, 1215, 18, 16, 19, 22, 419, 358, 391, 483),
    "architecture_engineering": (2528, 2956, 31, 25, 56, 66, 484, 524, 465, 700),
    "business_economics_finance": (7384, 8232, 87, 88, 150, 178, 2242, 2601, 1809, 2357),
    "communication_publishing": (1220, 2412, 15, 21, 18, 54, 470, 676, 329, 570),
    "industrial_information_engineering": (7417, 1629, 120, 23, 131, 29, 3472, 640, 1322, 380),
    "law_legal_sciences": (6734, 9120, 55, 50, 110, 220, 627, 819, 2380, 4533),
    "literature_humanities": (1809, 3720, 22, 63, 34, 57, 467, 1023, 632, 1439),
    "medicine_dentistry_pharmacy": (5108, 9438, 68, 144, 76, 177, 1695, 3340, 1677, 3242),
    "political_science": (2364, 2669, 42, 24, 33, 55, 779, 806, 600, 949),
    "science_it": (4487, 6018, 42, 67, 85, 126, 1402, 1587, 1580, 2746),
}

with open(DATA / "ans.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["source", "gender", "program", "year", "total"])
    for prog, v in sorted(ROWS.items()):
        for gi, g in enumerate(["M", "F"]):
            w.writerow(["ANS", g, prog, 2011, v[gi]])

with open(DATA / "istat_2011.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["source", "gender", "program", "year", "employed", "unemployed"])
    for prog, v in sorted(ROWS.items()):
        for gi, g in enumerate(["M", "F"]):
            w.writerow(["Istat", g, prog, 2011, v[2 + gi], v[4 + gi]])

with open(DATA / "almalaurea.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["source", "gender", "program", "year", "employed", "unemployed"])
    for prog, v in sorted(ROWS.items()):
        for gi, g in enumerate(["M", "F"]):
            w.writerow(["Almalaurea", g, prog, 2012, v[6 + gi], v[8 + gi]])

ist = sum(sum(v[2:6]) for v in ROWS.values())
alma = sum(sum(v[6:10]) for v in ROWS.values())
print("istat total:", ist, "alma total:", alma)
assert ist == 2717 and alma == 53015
