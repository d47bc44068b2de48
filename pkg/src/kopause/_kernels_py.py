"""Pure-Python kernels; reference behaviour for the Cython build in ``_kernels.pyx``."""
from kopause.errors import CompositionError

SBASE = 0xAC00
SCOUNT = 11172
LBASE, LCOUNT = 0x1100, 19
VBASE, VCOUNT = 0x1161, 21
TBASE, TCOUNT = 0x11A7, 28  # tail index 0 means "no tail"
NCOUNT = VCOUNT * TCOUNT  # 588


def decompose_to_jamo(text):
    out = []
    append = out.append
    for ch in text:
        s = ord(ch) - SBASE
        if 0 <= s < SCOUNT:
            append(chr(LBASE + s // NCOUNT))
            append(chr(VBASE + (s % NCOUNT) // TCOUNT))
            t = s % TCOUNT
            if t:
                append(chr(TBASE + t))
        else:
            append(ch)
    return "".join(out)


def compose_from_jamo(text):
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = ord(text[i])
        if LBASE <= c < LBASE + LCOUNT:
            if i + 1 >= n or not (VBASE <= ord(text[i + 1]) < VBASE + VCOUNT):
                raise CompositionError(i, "lead consonant without a following vowel")
            s = SBASE + ((c - LBASE) * VCOUNT + ord(text[i + 1]) - VBASE) * TCOUNT
            i += 2
            if i < n and TBASE < ord(text[i]) < TBASE + TCOUNT:
                s += ord(text[i]) - TBASE
                i += 1
            out.append(chr(s))
        elif VBASE <= c < VBASE + VCOUNT:
            raise CompositionError(i, "vowel without a preceding lead consonant")
        elif TBASE < c < TBASE + TCOUNT:
            raise CompositionError(i, "tail consonant without a preceding syllable")
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def silent_runs(energy, threshold):
    """Maximal ``[start, end)`` runs where ``energy < threshold``."""
    runs = []
    start = -1
    for i, e in enumerate(energy):
        if e < threshold:
            if start < 0:
                start = i
        elif start >= 0:
            runs.append((start, i))
            start = -1
    if start >= 0:
        runs.append((start, len(energy)))
    return runs
