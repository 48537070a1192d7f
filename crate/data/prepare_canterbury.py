#!/usr/bin/env python3
"""Build data/canterbury-en.txt from the four English texts of the Canterbury
compression corpus (alice29.txt, asyoulik.txt, lcet10.txt, plrabn12.txt).

All four are public-domain works distributed through Project Gutenberg. Each
non-blank input line becomes one output line; words and punctuation are split
into space-separated tokens so the file can be consumed as pre-tokenized text.
Control characters, such as the DOS end-of-file markers some files carry, are
dropped.

usage: prepare_canterbury.py DIR_WITH_TXT_FILES > data/canterbury-en.txt
"""
import re
import sys
from pathlib import Path

FILES = ["alice29.txt", "asyoulik.txt", "lcet10.txt", "plrabn12.txt"]
TOKEN = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?|[^\sA-Za-z0-9\x00-\x1f\x7f]")


def main() -> None:
    root = Path(sys.argv[1])
    out = sys.stdout
    for name in FILES:
        text = (root / name).read_text(encoding="ascii")
        for line in text.splitlines():
            tokens = TOKEN.findall(line)
            if tokens:
                out.write(" ".join(tokens))
                out.write("\n")


if __name__ == "__main__":
    main()
