"""Builds the synthetic 6-question benchmark suite used by CLI and
acceptance tests: corpus, per-question scripted fixtures, bench.jsonl.

Design of the scripted runs (seeker adapter): every turn the conductor
answers with a single user_message envelope; the simulator refines until
it utters the latent question verbatim (exact-match convergence, no judge
call on that turn). Expected metrics, fixed by construction:

    q1 converges turn 2, correct answer      q4 never converges
    q2 converges turn 5, wrong answer        q5 converges turn 3, correct
    q3 converges turn 9, correct answer      q6 never converges

    convergence 4/6 = 66.67%, median of [2,5,9,3] (lower middle) = 3,
    accuracy 3/6 = 50.0%
"""

from __future__ import annotations

import json
from pathlib import Path

QUESTIONS = [
    {
        "id": "q1",
        "question": "What is the average tariff rate for German suppliers?",
        "answer": {"type": "numeric", "value": 0.075, "decimals": 4},
        "converge_turn": 2,
        "correct": True,
        "final_number": "0.0750",
    },
    {
        "id": "q2",
        "question": "How many procurement records involve France?",
        "answer": {"type": "numeric", "value": 14, "decimals": 0},
        "converge_turn": 5,
        "correct": False,
        "final_number": "11",
    },
    {
        "id": "q3",
        "question": "What is the total procurement spend in 2021?",
        "answer": {"type": "numeric", "value": 125000.5, "decimals": 2},
        "converge_turn": 9,
        "correct": True,
        "final_number": "125000.50",
    },
    {
        "id": "q4",
        "question": "Which supplier has the highest indirect tariff exposure?",
        "answer": {"type": "text", "value": "supplier 12345"},
        "converge_turn": None,
        "correct": False,
        "final_number": None,
    },
    {
        "id": "q5",
        "question": "What is the median shipment delay in days?",
        "answer": {"type": "numeric", "value": 6, "decimals": 0},
        "converge_turn": 3,
        "correct": True,
        "final_number": "6",
    },
    {
        "id": "q6",
        "question": "What share of imports comes from tariffed countries?",
        "answer": {"type": "numeric", "value": 0.31, "decimals": 2},
        "converge_turn": None,
        "correct": False,
        "final_number": None,
    },
]

TURN_LIMIT = 15

CORPUS_CSV = """supplier_id,country,price,year
12345,Germany,100.0,2021
777,France,55.0,2021
888,Germany,200.0,2020
"""


def _jsonl(path: Path, lines: list[dict]) -> None:
    path.write_text("".join(json.dumps(l) + "\n" for l in lines))


def build_suite(root: Path) -> dict:
    """Create corpus/, fixtures/, and bench.jsonl under root; returns paths."""
    root = Path(root)
    corpus_dir = root / "corpus"
    fixtures_dir = root / "fixtures"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    (root / "data").mkdir(exist_ok=True)
    csv_path = root / "data" / "procurement.csv"
    csv_path.write_text(CORPUS_CSV)

    bench_lines = []
    for q in QUESTIONS:
        bench_lines.append(
            {
                "id": q["id"],
                "question": q["question"],
                "answer": q["answer"],
                "domain_expert_desc": "a procurement analyst",
                "initial_broad_prompt": (
                    f"I'd like to explore our procurement data ({q['id']})."
                ),
            }
        )
        qdir = fixtures_dir / q["id"]
        qdir.mkdir(parents=True, exist_ok=True)

        turns = q["converge_turn"] or TURN_LIMIT
        # simulator speaks on turns 2..turns (turn 1 uses the initial prompt);
        # on the converging turn it utters the latent question verbatim
        sim_lines = []
        for t in range(2, turns + 1):
            if q["converge_turn"] is not None and t == turns:
                sim_lines.append({"text": q["question"]})
            else:
                sim_lines.append({"text": f"tell me more ({q['id']} turn {t})"})
        _jsonl(qdir / "simulator.jsonl", sim_lines)

        # judge consulted on every non-matching turn
        judged = turns - 1 if q["converge_turn"] is not None else TURN_LIMIT
        _jsonl(qdir / "judge.jsonl", [{"text": "no"} for _ in range(judged)])

        # conductor answers each turn with one user_message envelope
        conductor_lines = []
        for t in range(1, turns + 1):
            if q["converge_turn"] is not None and t == turns:
                text = f"The computed value is {q['final_number']}."
            else:
                text = f"Here is what I can see so far ({q['id']} turn {t})."
            conductor_lines.append(
                {"text": json.dumps({"action": "user_message", "text": text})}
            )
        _jsonl(qdir / "conductor.jsonl", conductor_lines)

    bench_path = root / "bench.jsonl"
    bench_path.write_text("".join(json.dumps(l) + "\n" for l in bench_lines))
    return {
        "bench": bench_path,
        "fixtures": fixtures_dir,
        "corpus": corpus_dir,
        "csv": csv_path,
    }


EXPECTED = {
    "convergence_pct": 66.67,
    "median_turns": 3,
    "accuracy_pct": 50.0,
}
