"""Longest common substring via a suffix automaton."""

from __future__ import annotations


def _automaton(s: str) -> tuple[list[dict[str, int]], list[int], list[int]]:
    nxt: list[dict[str, int]] = [{}]
    link = [-1]
    length = [0]
    last = 0
    for ch in s:
        cur = len(nxt)
        nxt.append({})
        link.append(0)
        length.append(length[last] + 1)
        p = last
        while p != -1 and ch not in nxt[p]:
            nxt[p][ch] = cur
            p = link[p]
        if p != -1:
            q = nxt[p][ch]
            if length[p] + 1 == length[q]:
                link[cur] = q
            else:
                clone = len(nxt)
                nxt.append(dict(nxt[q]))
                link.append(link[q])
                length.append(length[p] + 1)
                while p != -1 and nxt[p].get(ch) == q:
                    nxt[p][ch] = clone
                    p = link[p]
                link[q] = link[cur] = clone
        last = cur
    return nxt, link, length


class LcsMatcher:
    """Longest-common-substring queries against one fixed text."""

    def __init__(self, text: str) -> None:
        self.text = text
        self._nxt, self._link, self._len = _automaton(text)

    def longest_in(self, other: str) -> int:
        nxt, link, length = self._nxt, self._link, self._len
        state = cur = best = 0
        for ch in other:
            while state and ch not in nxt[state]:
                state = link[state]
                cur = length[state]
            if ch in nxt[state]:
                state = nxt[state][ch]
                cur += 1
            else:
                cur = 0
            if cur > best:
                best = cur
        return best


def lcs_len(a: str, b: str) -> int:
    """Length in code points of the longest contiguous substring shared by ``a`` and ``b``.

    Linear time: build the automaton of the shorter string and stream the
    longer one through it.

    >>> lcs_len("abcdef", "zabcy")
    3
    """
    if len(a) > len(b):
        a, b = b, a
    return LcsMatcher(a).longest_in(b) if a else 0
