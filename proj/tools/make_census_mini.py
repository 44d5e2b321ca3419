"""Generate data/census_mini.csv: a small mixed-type table with an ordinal
education/education_num pairing and lon/lat points inside a rectangle region."""
import csv
import json
import random

EDUCATION = ["Preschool", "HS-grad", "Some-college", "Bachelors", "Masters", "Doctorate"]
RANK = {e: i + 1 for i, e in enumerate(EDUCATION)}

rng = random.Random(20240601)
rows = []
for _ in range(800):
    edu = rng.choices(EDUCATION, weights=[1, 8, 6, 5, 2, 1])[0]
    age = rng.randint(18, 75)
    hours = max(5, min(80, int(rng.gauss(30 + 3 * RANK[edu], 8))))
    p_high = 0.05 + 0.12 * RANK[edu] + (0.1 if hours > 45 else 0.0)
    income = ">50K" if rng.random() < p_high else "<=50K"
    lon = round(rng.uniform(-124.0, -114.5), 3)
    lat = round(rng.uniform(32.6, 41.9), 3)
    rows.append([age, edu, RANK[edu], hours, lon, lat, income])

with open("data/census_mini.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["age", "education", "education_num", "hours_per_week", "longitude", "latitude", "income"])
    w.writerows(rows)

schema = {
    "features": [
        {"name": "age", "kind": "numerical"},
        {"name": "education", "kind": "categorical"},
        {"name": "education_num", "kind": "numerical"},
        {"name": "hours_per_week", "kind": "numerical"},
        {"name": "longitude", "kind": "numerical"},
        {"name": "latitude", "kind": "numerical"},
        {"name": "income", "kind": "categorical"},
    ],
    "target": "income",
    "task": "classification",
}
with open("data/census_mini.schema.json", "w") as f:
    json.dump(schema, f, indent=2)

constraints = {
    "constraints": [
        {
            "name": "region",
            "kind": "polygon_containment",
            "lon": "longitude",
            "lat": "latitude",
            "ring": [[-124.0, 32.6], [-114.5, 32.6], [-114.5, 41.9], [-124.0, 41.9], [-124.0, 32.6]],
        },
        {
            "name": "education_order",
            "kind": "ordinal_consistency",
            "category": "education",
            "numeric": "education_num",
            "order": RANK,
        },
    ]
}
with open("data/census_mini.constraints.json", "w") as f:
    json.dump(constraints, f, indent=2)
