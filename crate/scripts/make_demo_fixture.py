"""Writes data/demo_assistments.csv: a small ASSISTments skill-builder style
extract with 20 students and two problems for each of five statistics skills.

The rows are synthetic but use the public file's column layout. Three
student profiles (steady, struggling on Mean / Box and Whisker, hint-reliant
on Venn Diagram / Scatter Plot) give the clustering something to find.
"""

import csv
import random
from pathlib import Path

SKILLS = [
    (47, "Mean"),
    (49, "Circle Graph"),
    (53, "Venn Diagram"),
    (58, "Box and Whisker"),
    (62, "Scatter Plot"),
]

PROFILES = {
    "steady": {"wrong": {}, "hints": {}, "base_wrong": 0.1},
    "mean_box": {"wrong": {"Mean": 0.85, "Box and Whisker": 0.7}, "hints": {"Mean": 1}, "base_wrong": 0.15},
    "hint_reliant": {"wrong": {"Venn Diagram": 0.5}, "hints": {"Venn Diagram": 1, "Scatter Plot": 1}, "base_wrong": 0.2},
}


def main() -> None:
    rng = random.Random(2009)
    students = [70000 + 17 * i for i in range(20)]
    profile_of = {}
    for i, s in enumerate(students):
        profile_of[s] = ["steady", "mean_box", "hint_reliant"][i % 3]

    problems = []
    for idx, (skill_id, name) in enumerate(SKILLS):
        for j in range(2):
            problems.append((skill_id, name, 51000 + 100 * idx + j, 33000 + 100 * idx + j))

    rows = []
    order_id = 3300000
    for skill_id, name, problem_id, assistment_id in problems:
        order = students[:]
        rng.shuffle(order)
        for user_id in order:
            p = PROFILES[profile_of[user_id]]
            wrong = rng.random() < p["wrong"].get(name, p["base_wrong"])
            hints = p["hints"].get(name, 0) if wrong or name == "Venn Diagram" else 0
            order_id += rng.randint(1, 40)
            rows.append(
                {
                    "order_id": order_id,
                    "assignment_id": 39063,
                    "user_id": user_id,
                    "assistment_id": assistment_id,
                    "problem_id": problem_id,
                    "original": 1,
                    "correct": 0 if wrong else 1,
                    "attempt_count": 1 + int(wrong) + hints,
                    "ms_first_response": rng.randint(4000, 90000),
                    "skill_id": skill_id,
                    "skill_name": name,
                    "hint_count": hints,
                    "hint_total": 3,
                }
            )

    out = Path(__file__).resolve().parent.parent / "data" / "demo_assistments.csv"
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    hints = sum(r["hint_count"] for r in rows)
    print(f"{len(rows)} rows, {hints} hints, {len(rows) + hints} events -> {out}")


if __name__ == "__main__":
    main()
