"""Independent re-implementation of the reference n-gram random-projection
encoder, used to freeze expected vectors and semantic scores for the C++ tests.

Run: python3 tests/oracles/reference_encoder.py
"""
import math

MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


FOLD = {0x0386: 0x03B1, 0x03AC: 0x03B1, 0x0388: 0x03B5, 0x03AD: 0x03B5, 0x0389: 0x03B7, 0x03AE: 0x03B7,
        0x038A: 0x03B9, 0x03AF: 0x03B9, 0x0390: 0x03B9, 0x03AA: 0x03B9, 0x03CA: 0x03B9,
        0x038C: 0x03BF, 0x03CC: 0x03BF, 0x038E: 0x03C5, 0x03CD: 0x03C5, 0x03B0: 0x03C5,
        0x03AB: 0x03C5, 0x03CB: 0x03C5, 0x038F: 0x03C9, 0x03CE: 0x03C9, 0x03C2: 0x03C3}


def fold(cp: int) -> int:
    if ord('A') <= cp <= ord('Z'):
        return cp + 32
    if 0xC0 <= cp <= 0xDE and cp != 0xD7:
        return cp + 32
    if 0x0391 <= cp <= 0x03A9:
        cp += 32
    return FOLD.get(cp, cp)


def encode(text: str, dim=128, seed=0x5EED, n=3):
    folded = [ord(' ')]
    for ch in text:
        if ch.isspace():
            if folded[-1] != ord(' '):
                folded.append(ord(' '))
        else:
            folded.append(fold(ord(ch)))
    if folded[-1] != ord(' '):
        folded.append(ord(' '))
    counts = {}
    if len(folded) > 1:
        for i in range(len(folded) - n + 1):
            g = ''.join(chr(c) for c in folded[i:i + n]).encode('utf-8')
            h = fnv1a64(g)
            counts[h] = counts.get(h, 0) + 1
    v = [0.0] * dim
    for h, c in counts.items():
        state = h ^ seed
        bits = 0
        for j in range(dim):
            if j % 64 == 0:
                state, bits = splitmix64(state)
            v[j] += c if bits & 1 else -c
            bits >>= 1
    return v


def semantic_score(a: str, b: str) -> float:
    va, vb = encode(a), encode(b)
    na = math.sqrt(sum(x * x for x in va))
    nb = math.sqrt(sum(x * x for x in vb))
    if na == 0 or nb == 0:
        return 0.0
    cos = sum(x * y for x, y in zip(va, vb)) / (na * nb)
    return 100.0 * max(0.0, cos)


if __name__ == '__main__':
    a = "Η απόφαση αφορά την ανάληψη υποχρέωσης ύψους 381,22 € για κρατήσεις τραπεζών."
    b = "Ανάληψη υποχρέωσης 381,22 ευρώ για τραπεζικές κρατήσεις της ΔΕΥΑ Θήρας."
    print("vector(a)[0:4] =", encode(a)[:4])
    print("vector('αβγ')[0:8] =", encode("αβγ")[:8])
    print("semantic_score(a, b) = %.12f" % semantic_score(a, b))
    print("semantic_score(a, a) = %.12f" % semantic_score(a, a))
