#!/usr/bin/env python3
"""Writes the selection-distribution fixture transcripts.

Each condition holds 22 dialogues of 8 turns (4 per agent, Taylor first), so
each agent has 88 turns per condition. Only the quoted counts are meaningful:
John's Child selections (10 off, 15 on) and Taylor's Parent selections
(8 off, 18 on). The remaining counts are filler chosen so every row sums to 88.

Run from this directory: python3 generate.py
"""
import json
import os
import random

DIALOGUES = 22
TURNS_PER_AGENT = 4

COUNTS = {
    "memory_on": {"Taylor": {"parent": 18, "adult": 60, "child": 10},
                  "John": {"parent": 5, "adult": 68, "child": 15}},
    "memory_off": {"Taylor": {"parent": 8, "adult": 72, "child": 8},
                   "John": {"parent": 3, "adult": 75, "child": 10}},
}

TARGET = {("Taylor", "parent"): "child", ("John", "child"): "parent"}


def sequence(counts, rng):
    seq = [s for s in ("parent", "adult", "child") for _ in range(counts[s])]
    rng.shuffle(seq)
    return seq


def main():
    rng = random.Random(20240611)
    for condition, per_agent in COUNTS.items():
        os.makedirs(condition, exist_ok=True)
        seqs = {agent: sequence(c, rng) for agent, c in per_agent.items()}
        for d in range(DIALOGUES):
            turns = []
            for i in range(2 * TURNS_PER_AGENT):
                agent = "Taylor" if i % 2 == 0 else "John"
                state = seqs[agent][d * TURNS_PER_AGENT + i // 2]
                candidates = [
                    {"source_state": s, "text": f"{agent} {s} line {d}.{i}",
                     "query_used": None, "retrieved": [], "tone_hint": None}
                    for s in ("parent", "adult", "child")
                ]
                turns.append({
                    "index": i,
                    "speaker": agent,
                    "text": f"{agent} {state} line {d}.{i}",
                    "selected_state": state,
                    "addressed_state": TARGET.get((agent, state), "adult"),
                    "candidates": candidates,
                    "fallback_used": False,
                })
            doc = {"scenario_id": "reference-counts", "condition": condition, "seed": d, "turns": turns}
            with open(os.path.join(condition, f"dialogue-{d}.json"), "w") as f:
                json.dump(doc, f, indent=2)
                f.write("\n")


if __name__ == "__main__":
    main()
