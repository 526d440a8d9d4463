"""Regenerates the end-to-end fixture files in this directory.

The scripted models answer correctly on a fixed subset of questions chosen
from SCORES, so the expected strategy matrix is known in advance.
"""
import json
from pathlib import Path

HERE = Path(__file__).resolve().parent
ORDER = ["N", "R", "S", "D"]

# Correct answers out of 10 per (train strategy, test strategy).
SCORES = {
    "N": {"N": 6, "R": 5, "S": 5, "D": 4},
    "R": {"N": 3, "R": 7, "S": 6, "D": 5},
    "S": {"N": 4, "R": 6, "S": 7, "D": 9},
    "D": {"N": 3, "R": 6, "S": 8, "D": 6},
}
PERSONA = {
    "S": "a number theorist who enjoys modular arithmetic",
    "D": "a pastry chef running a busy bakery",
    "R": "a sailor who charts coastal routes",
}
QUESTIONS = [
    ("Compute 17 + 25.", 42), ("Compute 9 * 8.", 72), ("Compute 100 - 37.", 63),
    ("Compute 2^10 mod 1000.", 24), ("Compute 144 / 12.", 12), ("Compute 13 * 13.", 169),
    ("Compute 7 + 8 + 9.", 24), ("Compute 999 - 111.", 888), ("Compute 3^5.", 243),
    ("Compute 50 * 6.", 300),
]
DOMAINS = ["maritime navigation", "baking", "jazz music", "beekeeping", "mountaineering",
           "typography"]


def qid(k):
    return f"q{k + 1:02d}"


def correct_set(train, test):
    offset = ORDER.index(train) * 3 + ORDER.index(test)
    return {(offset + 7 * k) % 10 for k in range(SCORES[train][test])}


def wrong_answer(train, k, gold):
    # Every third question has a shared wrong answer, so wrong majorities occur.
    return gold + 1 if k % 3 == 0 else gold + 1 + ORDER.index(train)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def main():
    corpus = []
    for k in range(20):
        a, b = k + 3, 2 * k + 1
        output = f"We add {a} and {b} to get {a + b}.\nThe final answer is $\\boxed{{{a + b}}}$."
        if k in (4, 13):
            output = f"Adding gives {a + b}."
        corpus.append({"id": f"mini-{k + 1:02d}", "query": f"What is {a} + {b}?",
                       "output": output, "gold_answer": str(a + b)})
    write_jsonl(HERE / "corpus.jsonl", corpus)

    bench = [{"benchmark": "MINI", "size": len(QUESTIONS), "mode": "math",
              "integer_range": [0, 999]}]
    for k, (q, gold) in enumerate(QUESTIONS):
        bench.append({"query_id": qid(k), "query": f"[{qid(k)}] {q}", "gold_answer": str(gold)})
    write_jsonl(HERE / "mini_bench.jsonl", bench)

    rules = [
        {"match": {"model": "persona-gen", "contains": ["distinct domains"]},
         "response": "\n".join(f"{i + 1}. {d}" for i, d in enumerate(DOMAINS))},
        {"match": {"model": "persona-gen", "contains": ["closely related to the problem"]},
         "response": PERSONA["S"]},
        {"match": {"model": "persona-gen", "contains": ["nothing to do with the problem"]},
         "response": f"Persona: {PERSONA['D']}."},
        {"match": {"model": "persona-gen", "contains": ["from the domain of"]},
         "response": f"\"{PERSONA['R']}\""},
        # One transient failure, recovered by the client's retry.
        {"match": {"model": "model-D", "contains": ["[q10]", "You are " + PERSONA["R"]]},
         "script": [{"status": 503}, {"response": "reply"}]},
    ]
    for train in ORDER:
        for test in ORDER:
            good = correct_set(train, test)
            for k, (_, gold) in enumerate(QUESTIONS):
                answer = gold if k in good else wrong_answer(train, k, gold)
                text = f"Working through it carefully.\nThe final answer is \\boxed{{{answer}}}."
                match = {"model": f"model-{train}", "contains": [f"[{qid(k)}]"]}
                if test == "N":
                    match["not_contains"] = ["You are "]
                else:
                    match["contains"].append("You are " + PERSONA[test])
                rules.append({"match": match, "response": text})
    # Patch the scripted rule's second step with the real answer it stands in for.
    train, test, k = "D", "R", 9
    gold = QUESTIONS[k][1]
    answer = gold if k in correct_set(train, test) else wrong_answer(train, k, gold)
    rules[4]["script"][1]["response"] = (
        f"Working through it carefully.\nThe final answer is \\boxed{{{answer}}}.")
    fixture = {"rules": rules, "seed": 1}
    (HERE / "mock.json").write_text(json.dumps(fixture, indent=1) + "\n")

    print("expected matrix (MINI):")
    for train in ORDER:
        print(train, [f"{100 * SCORES[train][t] / 10:.2f}" for t in ORDER])


if __name__ == "__main__":
    main()
