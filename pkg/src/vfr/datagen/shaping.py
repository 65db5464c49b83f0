"""Contextual shaping of Arabic-script text into presentation forms.

The form table is derived from the Unicode character database: every
presentation-form codepoint decomposes as ``<isolated|initial|medial|final>
base``. A base letter with initial/medial forms is dual-joining; one with
only isolated/final forms is right-joining.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache

ISOLATED, INITIAL, MEDIAL, FINAL = "isolated", "initial", "medial", "final"
FORMS = (ISOLATED, INITIAL, MEDIAL, FINAL)

TATWEEL = "ـ"
ZWNJ = "‌"
LAM = "ل"
ALEF_VARIANTS = "آأإا"

PERSIAN_LETTERS = (
    "ا", "ب", "پ", "ت", "ث", "ج", "چ", "ح",
    "خ", "د", "ذ", "ر", "ز", "ژ", "س", "ش",
    "ص", "ض", "ط", "ظ", "ع", "غ", "ف", "ق",
    "ک", "گ", "ل", "م", "ن", "و", "ه", "ی",
)


@lru_cache(maxsize=1)
def _tables():
    forms: dict[str, dict[str, str]] = {}
    lam_alef: dict[str, dict[str, str]] = {}
    for cp in list(range(0xFB50, 0xFE00)) + list(range(0xFE70, 0xFF00)):
        ch = chr(cp)
        dec = unicodedata.decomposition(ch).split()
        if len(dec) < 2 or dec[0].strip("<>") not in FORMS:
            continue
        form = dec[0].strip("<>")
        bases = "".join(chr(int(h, 16)) for h in dec[1:])
        if len(bases) == 1:
            # FB50.. and FE70.. both cover some letters; keep the first seen
            forms.setdefault(bases, {}).setdefault(form, ch)
        elif len(bases) == 2 and bases[0] == LAM and bases[1] in ALEF_VARIANTS:
            lam_alef.setdefault(bases[1], {})[form] = ch
    return forms, lam_alef


def presentation_forms(letter: str) -> dict[str, str]:
    """Map of available contextual forms for a base letter (may be empty)."""
    return dict(_tables()[0].get(letter, {}))


def is_arabic_letter(ch: str) -> bool:
    return "؀" <= ch <= "ۿ" and unicodedata.category(ch) == "Lo"


def joining_type(ch: str) -> str:
    """'D' dual, 'R' right, 'C' join-causing, 'T' transparent, 'U' non-joining."""
    if ch == TATWEEL:
        return "C"
    if unicodedata.category(ch) in ("Mn", "Me"):
        return "T"
    forms = _tables()[0].get(ch)
    if not forms:
        return "U"
    if INITIAL in forms or MEDIAL in forms:
        return "D"
    return "R" if FINAL in forms else "U"


@dataclass(frozen=True)
class ShapedText:
    glyphs: str            # visual (left-to-right drawing) order
    direction: str         # "rtl" or "ltr"
    unmapped: int          # Arabic-script letters with no presentation form


def contextual_forms(text: str) -> tuple[list[str], int]:
    """Assign each character its contextual form in logical order.

    Returns the shaped characters (lam+alef pairs fused into one ligature)
    and the number of Arabic letters that had no presentation form.
    """
    forms_tbl, lam_alef = _tables()
    types = [joining_type(c) for c in text]
    n = len(text)

    def neighbour(i, step):
        j = i + step
        while 0 <= j < n and types[j] == "T":
            j += step
        return j if 0 <= j < n else None

    out: list[str] = []
    unmapped = 0
    i = 0
    while i < n:
        ch, t = text[i], types[i]
        if ch == ZWNJ:
            i += 1
            continue
        if t in ("T", "U") or ch == TATWEEL:
            if t == "U" and is_arabic_letter(ch):
                unmapped += 1
            out.append(ch)
            i += 1
            continue
        p = neighbour(i, -1)
        joins_prev = p is not None and types[p] in ("D", "C")
        nxt = neighbour(i, 1)
        if ch == LAM and nxt is not None and text[nxt] in lam_alef and nxt == i + 1:
            form = FINAL if joins_prev else ISOLATED
            out.append(lam_alef[text[nxt]][form])
            i = nxt + 1
            continue
        joins_next = t in ("D", "C") and nxt is not None and types[nxt] in ("D", "R", "C")
        form = {(False, False): ISOLATED, (False, True): INITIAL,
                (True, False): FINAL, (True, True): MEDIAL}[(joins_prev, joins_next)]
        table = forms_tbl[ch]
        out.append(table.get(form) or table.get(ISOLATED) or ch)
        i += 1
    return out, unmapped


def shape_text(raw: str) -> ShapedText:
    """Shape ``raw`` and return glyphs in drawing order.

    Text containing any Arabic-script letter is treated as one right-to-left
    run and reversed after shaping; anything else passes through unchanged.
    """
    if not any(is_arabic_letter(c) for c in raw):
        return ShapedText(raw, "ltr", 0)
    shaped, unmapped = contextual_forms(raw)
    return ShapedText("".join(reversed(shaped)), "rtl", unmapped)
