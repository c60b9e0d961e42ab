from __future__ import annotations

from typing import Iterable, Sequence

UNK, START, STOP, PAD = "[UNK]", "[START]", "[STOP]", "[PAD]"
RESERVED = (UNK, START, STOP, PAD)
UNK_ID, START_ID, STOP_ID, PAD_ID = 0, 1, 2, 3


class Vocabulary:
    """Token <-> id bijection with reserved ids 0-3."""

    def __init__(self, tokens: Iterable[str]):
        content = [t for t in tokens]
        itos = list(RESERVED) + content
        if len(set(itos)) != len(itos):
            dup = sorted({t for t in itos if itos.count(t) > 1})
            raise ValueError(f"duplicate or reserved tokens in vocabulary: {dup}")
        if len(itos) < 5:
            raise ValueError("vocabulary needs at least one content token")
        self._itos = itos
        self._stoi = {t: i for i, t in enumerate(itos)}

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    @property
    def content_tokens(self) -> list[str]:
        return self._itos[len(RESERVED):]

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def encode_source(self, tokens: Sequence[str]):
        """Map source tokens to (vocab ids, extended ids, oov list).

        Out-of-vocabulary source tokens get extended ids ``len(self) + k`` in
        order of first appearance; their vocab id is UNK.
        """
        oovs: list[str] = []
        ids, ext = [], []
        for t in tokens:
            i = self._stoi.get(t)
            if i is None:
                if t not in oovs:
                    oovs.append(t)
                ids.append(UNK_ID)
                ext.append(len(self._itos) + oovs.index(t))
            else:
                ids.append(i)
                ext.append(i)
        return ids, ext, oovs

    def encode_target(self, tokens: Sequence[str], oovs: Sequence[str]) -> list[int]:
        """Extended ids for a target sequence, STOP appended."""
        out = []
        for t in tokens:
            i = self._stoi.get(t)
            if i is None:
                i = len(self._itos) + oovs.index(t) if t in oovs else UNK_ID
            out.append(i)
        out.append(STOP_ID)
        return out

    def ext_token(self, idx: int, oovs: Sequence[str]) -> str:
        if idx < len(self._itos):
            return self._itos[idx]
        return oovs[idx - len(self._itos)]
