#!/usr/bin/env python3
"""Writes the bundled synthetic treebank (data/toy50.mrg) and its
part-of-speech sequences in two-column form (data/toy50.tags).

Prepositional phrases attach to the verb phrase when their object is an
instrument or a place and to the noun phrase otherwise, so the attachment
is only recoverable through the latent refinement of the PP.
"""
import argparse
import random
import re

DT = ["the", "a"]
NN = ["man", "dog", "woman", "cat", "boy"]
NNP = ["john", "mary"]
VBD = ["saw", "chased", "watched", "found"]
VBI = ["slept", "ran"]
IN = ["with", "near"]
ADVERBIAL = ["telescope", "stick", "park", "garden"]
ADNOMINAL = ["hat", "tail", "collar", "scarf"]


def np(rng, allow_pp=True):
    r = rng.random()
    if r < 0.2:
        return "(NP (NNP %s))" % rng.choice(NNP)
    base = "(DT %s) (NN %s)" % (rng.choice(DT), rng.choice(NN))
    if allow_pp and r > 0.8:
        return "(NP %s %s)" % (base, pp(rng, ADNOMINAL))
    return "(NP %s)" % base


def pp(rng, nouns):
    obj = "(NP (DT %s) (NN %s))" % (rng.choice(DT), rng.choice(nouns))
    return "(PP (IN %s) %s)" % (rng.choice(IN), obj)


def vp(rng):
    r = rng.random()
    if r < 0.15:
        return "(VP (VBD %s))" % rng.choice(VBI)
    verb = "(VBD %s)" % rng.choice(VBD)
    if r < 0.45:
        return "(VP %s %s)" % (verb, np(rng))
    if r < 0.75:
        # object NP with an adnominal PP
        obj = "(NP (DT %s) (NN %s) %s)" % (rng.choice(DT), rng.choice(NN), pp(rng, ADNOMINAL))
        return "(VP %s %s)" % (verb, obj)
    return "(VP %s %s %s)" % (verb, np(rng, allow_pp=False), pp(rng, ADVERBIAL))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--out", default="data/toy50.mrg")
    ap.add_argument("--tags-out", default="data/toy50.tags")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    trees = ["(S %s %s)" % (np(rng), vp(rng)) for _ in range(args.count)]
    with open(args.out, "w") as f:
        for t in trees:
            f.write(t + "\n")
    with open(args.tags_out, "w") as f:
        for t in trees:
            for tag, word in re.findall(r"\((\S+) ([^()\s]+)\)", t):
                f.write("%s\t%s\n" % (word, tag))
            f.write("\n")


if __name__ == "__main__":
    main()
