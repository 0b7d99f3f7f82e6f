"""Independent index computations used to check subgroup graphs."""
from collections import deque


def coset_oracle(generators, max_cosets=2000):
    """Index in <t, a, b | t^3> by Todd-Coxeter; None when the enumeration overflows."""
    from sympy.combinatorics.fp_groups import FpGroup
    from sympy.combinatorics.free_groups import free_group

    F, t, a, b = free_group("t a b")
    G = FpGroup(F, [t ** 3])
    letters = {"t": t, "a": a, "b": b}
    words = []
    for text in generators:
        w = F.identity
        for tok in text.split():
            lab, _, exp = tok.partition("^")
            w = w * letters[lab] ** int(exp or 1)
        words.append(w)
    try:
        table = G.coset_enumeration(words, max_cosets=max_cosets)
    except ValueError:
        return None
    table.compress()
    return len(table.table)


def point_stabilizer(perms):
    """Schreier generators of the stabilizer of 0 and the orbit size of 0.

    ``perms`` maps generator labels to permutations given as tuples.
    """
    reps = {0: []}
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for lab, p in perms.items():
            for e, y in ((1, p[x]), (-1, p.index(x))):
                if y not in reps:
                    reps[y] = reps[x] + [(lab, e)]
                    queue.append(y)
    gens = []
    for x, word in reps.items():
        for lab, p in perms.items():
            y = p[x]
            w = word + [(lab, 1)] + [(l, -e) for l, e in reversed(reps[y])]
            if w:
                gens.append(" ".join(l if e == 1 else f"{l}^-1" for l, e in w))
    return gens, len(reps)
