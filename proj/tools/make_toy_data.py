#!/usr/bin/env python3
"""Writes the bundled toy corpus under data/toy/.

Five clients with 100 short documents each, a 50-entry example pool spread
over three domains, and a 50-sample evaluation set with canned responses.
Output is fully determined by SEED.
"""

import json
import random
from pathlib import Path

SEED = 20240917
OUT = Path(__file__).resolve().parent.parent / "data" / "toy"

DOMAINS = {
    "medicine": {
        "subjects": ["aspirin", "insulin", "the vaccine", "statin therapy", "the new antibiotic",
                     "early screening", "physical therapy", "the beta blocker", "vitamin D", "the inhaler"],
        "effects": ["reduced inflammation", "lowered blood glucose", "improved survival rates",
                    "decreased cholesterol levels", "shortened recovery time", "prevented infection",
                    "restored joint mobility", "stabilized heart rhythm", "strengthened bone density",
                    "eased breathing"],
        "groups": ["elderly patients", "children", "adults with diabetes", "smokers", "post-operative patients",
                   "pregnant women", "athletes", "patients with asthma"],
    },
    "knowledge": {
        "subjects": ["the river Danube", "Mount Kilimanjaro", "the Great Library", "the printing press",
                     "the Silk Road", "the Eiffel Tower", "the Roman aqueduct", "the Hubble telescope",
                     "the Amazon rainforest", "the Gutenberg Bible"],
        "effects": ["shaped regional trade", "attracted millions of visitors", "preserved ancient texts",
                    "spread literacy across Europe", "connected distant empires", "changed modern astronomy",
                    "supplied water to cities", "hosts thousands of species", "inspired later engineers",
                    "marked a cultural turning point"],
        "groups": ["historians", "merchants", "scholars", "tourists", "engineers", "explorers",
                   "local communities", "scientists"],
    },
    "math": {
        "subjects": ["a train", "a water tank", "a savings account", "a rectangle", "a cyclist",
                     "a recipe", "a factory", "a ladder", "a sequence", "a triangle"],
        "effects": ["travels 60 miles in 1.5 hours", "fills at 12 liters per minute",
                    "earns 4 percent interest each year", "has a perimeter of 36 meters",
                    "rides 18 kilometers per hour", "needs 3 cups of flour per batch",
                    "produces 240 units per shift", "leans against a 12 foot wall",
                    "doubles every step", "has angles in the ratio 1 to 2 to 3"],
        "groups": ["students", "planners", "investors", "builders", "coaches", "bakers", "managers",
                   "surveyors"],
    },
}

CLIENT_DOMAINS = ["medicine", "knowledge", "math", "medicine", "knowledge"]


def sentence(rng, domain):
    d = DOMAINS[domain]
    subject = rng.choice(d["subjects"])
    effect = rng.choice(d["effects"])
    group = rng.choice(d["groups"])
    templates = [
        "{S} {E} for {G}.",
        "Researchers observed that {s} {E} among {G}.",
        "According to the report, {s} {E} and {G} noticed the change.",
        "In a recent study {s} {E}, which surprised {G}.",
    ]
    t = rng.choice(templates)
    return t.format(S=subject[0].upper() + subject[1:], s=subject, E=effect, G=group)


def document(rng, domain):
    return " ".join(sentence(rng, domain) for _ in range(rng.randint(2, 4)))


def qa(rng, domain, text):
    first = text.split(".")[0].strip() + "."
    words = first.split()
    question = "What does the passage say about " + " ".join(words[:4]).lower().rstrip(".,") + "?"
    return question, first


def dump(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(SEED)
    OUT.mkdir(parents=True, exist_ok=True)

    for c, domain in enumerate(CLIENT_DOMAINS):
        rows = []
        for i in range(100):
            rows.append({"id": f"c{c}-d{i:03d}", "text": document(rng, domain), "meta": {"domain": domain}})
        dump(OUT / f"client_{c}.jsonl", rows)

    pool = []
    names = list(DOMAINS)
    for i in range(50):
        domain = names[i % 3]
        text = document(rng, domain)
        q, a = qa(rng, domain, text)
        pool.append({"document": text, "instruction": q, "response": a, "domain": domain})
    dump(OUT / "pool.jsonl", pool)

    refs, responses, annotated = [], [], []
    for i in range(50):
        domain = names[i % 3]
        text = document(rng, domain)
        q, a = qa(rng, domain, text)
        refs.append({"id": f"t{i:02d}", "instruction": q, "reference": a})
        # A plausible model answer: the reference with its tail replaced.
        words = a.rstrip(".").split()
        cut = max(1, len(words) - rng.randint(1, 3))
        responses.append({"id": f"t{i:02d}", "response": " ".join(words[:cut]) + " " + rng.choice(
            ["overall.", "in general.", "as reported.", "according to the text."])})
        annotated.append({"instruction": q, "response": a, "source_doc_id": f"t{i:02d}", "kept": True})
    dump(OUT / "eval_references.jsonl", refs)
    dump(OUT / "eval_responses.jsonl", responses)
    dump(OUT / "human_pairs.jsonl", annotated)

    config = {
        "seed": 7,
        "rounds": 10,
        "clients-per-round": 2,
        "learning-rate": 0.05,
        "local-steps": 10,
        "k": 3,
        "policy": "retrieval",
        "checkpoint-interval": 5,
        "init-zeros": "lora_A:4x16,lora_B:16x4",
        "sim-trainer-rows": 16,
        "clients": [{"id": f"client_{c}", "corpus": f"client_{c}.jsonl"} for c in range(len(CLIENT_DOMAINS))],
        "pool": "pool.jsonl",
        "references": "eval_references.jsonl",
        "responses": "eval_responses.jsonl",
        "out": "../../out/toy",
    }
    with open(OUT / "pipeline.json", "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
