"""Build the approximate 2021 state x age-bracket x sex census fixture.

State totals are Vintage-2021 resident population estimates (rounded as
published). Age and sex splits are approximated from each state's median
age and overall sex ratio, so the per-cell counts are close to, but not
identical with, the published single-year tables.
"""
import csv
import sys

POP = {
    "AL": 5039877, "AK": 732673, "AZ": 7276316, "AR": 3025891, "CA": 39237836,
    "CO": 5812069, "CT": 3605597, "DE": 1003384, "DC": 670050, "FL": 21781128,
    "GA": 10799566, "HI": 1441553, "ID": 1900923, "IL": 12671469, "IN": 6805985,
    "IA": 3193079, "KS": 2934582, "KY": 4509394, "LA": 4624047, "ME": 1372247,
    "MD": 6165129, "MA": 6984723, "MI": 10050811, "MN": 5707390, "MS": 2949965,
    "MO": 6168187, "MT": 1104271, "NE": 1963692, "NV": 3143991, "NH": 1388992,
    "NJ": 9267130, "NM": 2115877, "NY": 19835913, "NC": 10551162, "ND": 774948,
    "OH": 11780017, "OK": 3986639, "OR": 4246155, "PA": 12964056, "RI": 1095610,
    "SC": 5190705, "SD": 895376, "TN": 6975218, "TX": 29527941, "UT": 3337975,
    "VT": 645570, "VA": 8642274, "WA": 7738692, "WV": 1782959, "WI": 5895908,
    "WY": 578803,
}

MEDIAN_AGE = {
    "AL": 39.4, "AK": 35.0, "AZ": 38.4, "AR": 38.5, "CA": 37.3, "CO": 37.3,
    "CT": 41.1, "DE": 41.5, "DC": 34.4, "FL": 42.5, "GA": 37.2, "HI": 39.8,
    "ID": 36.9, "IL": 38.6, "IN": 38.0, "IA": 38.5, "KS": 37.1, "KY": 39.1,
    "LA": 37.2, "ME": 44.8, "MD": 39.1, "MA": 39.7, "MI": 40.1, "MN": 38.5,
    "MS": 38.3, "MO": 39.0, "MT": 40.3, "NE": 36.8, "NV": 38.4, "NH": 43.3,
    "NJ": 40.2, "NM": 38.6, "NY": 39.4, "NC": 39.0, "ND": 35.4, "OH": 39.6,
    "OK": 37.0, "OR": 39.9, "PA": 40.9, "RI": 40.4, "SC": 40.0, "SD": 37.4,
    "TN": 38.8, "TX": 35.2, "UT": 31.3, "VT": 43.0, "VA": 38.6, "WA": 38.2,
    "WV": 42.8, "WI": 40.0, "WY": 38.5,
}

MALE_SHARE = {
    "AK": 0.520, "ND": 0.511, "WY": 0.508, "NV": 0.503, "UT": 0.504, "MT": 0.503,
    "SD": 0.504, "ID": 0.501, "CO": 0.502, "WA": 0.500, "OR": 0.496, "HI": 0.501,
    "DC": 0.474, "MS": 0.484, "AL": 0.484, "MD": 0.484, "LA": 0.488, "GA": 0.487,
    "SC": 0.485, "NY": 0.486, "DE": 0.484, "NJ": 0.489, "MA": 0.486, "RI": 0.487,
    "CT": 0.488, "VA": 0.492,
}

NATIONAL_MEDIAN = 38.8
BRACKETS = ("le18", "19-29", "30-39", "ge40")
# Male share within each bracket, relative to the state's overall male share.
BRACKET_MALE_OFFSET = {"le18": 0.018, "19-29": 0.012, "30-39": 0.008, "ge40": -0.024}


def age_shares(state):
    if state == "DC":
        return {"le18": 0.18, "19-29": 0.24, "30-39": 0.20, "ge40": 0.38}
    d = MEDIAN_AGE[state] - NATIONAL_MEDIAN
    le18 = 0.245 - 0.008 * d
    a19 = 0.148 - 0.003 * d
    ge40 = 0.472 + 0.013 * d
    a30 = 1.0 - le18 - a19 - ge40
    return {"le18": le18, "19-29": a19, "30-39": a30, "ge40": ge40}


def cells(state):
    total = POP[state]
    male = MALE_SHARE.get(state, 0.494)
    shares = age_shares(state)
    out = []
    remaining = total
    for i, b in enumerate(BRACKETS):
        n_b = round(total * shares[b]) if i < 3 else total - sum(c for _, _, c in out)
        m = round(n_b * (male + BRACKET_MALE_OFFSET[b]))
        out.append((b, "m", m))
        out.append((b, "f", n_b - m))
    assert sum(c for _, _, c in out) == total
    return out


def main(path):
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geo", "age_bracket", "gender", "count"])
        for state in sorted(POP):
            for b, g, c in cells(state):
                w.writerow([state, b, g, c])
    grand = sum(POP.values())
    print(f"grand_total={grand}")
    for s in ("CA", "WY", "DC", "TX"):
        print(f"{s}={POP[s]}")
    m = sum(c for s in POP for b, g, c in cells(s) if g == "m")
    print(f"male_total={m}")


if __name__ == "__main__":
    main(sys.argv[1])
