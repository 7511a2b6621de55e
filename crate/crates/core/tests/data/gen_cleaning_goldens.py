r"""Writes cleaning_golden.tsv from an independent Python implementation.

Columns are raw and expected. Backslash, tab, carriage return and newline
are escaped as \\, \t, \r and \n so each pair stays on one line.
"""
import re

TAG = "MENTION"


def clean(text):
    text = TAG.join(part.lower() for part in text.split(TAG))
    text = re.sub(r"(?:https?://|www\.)\S*", "", text)
    text = text.replace("\r", " ").replace("\n", " ")
    text = re.sub(r"\s+", " ", text).strip()
    while re.search(r"@[A-Za-z0-9_]+", text):
        text = re.sub(r"@[A-Za-z0-9_]+", TAG, text)
    return text


def esc(s):
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


RAW = [
    "@Jane_Doe You are AMAZING!! https://t.co/xYz",
    "",
    "line1\nline2   end",
    "Check this out www.example.com/page now",
    "http://bit.ly/abc",
    "  leading and trailing  ",
    "@a @b @c hello",
    "@@double mention",
    "email me at joe@example.com",
    "Tabs\tand\r\nCRLF\nnewlines",
    "RT @SenSmith: Vote NO on HB2!!!",
    "ÉCOLE Ünïcode @Café",
    "https://t.co/a https://t.co/b",
    "ALL CAPS SHOUTING 😡😡",
    "url at end https://example.com/x?y=1&z=2",
    "@user_123, you're a #disgrace",
    "keep MENTION as is",
    "multiple     spaces\n\n\nand lines",
    "no change here",
    "@Rep_A and @Rep_B: https://x.co/1\nwww.y.com thanks!",
]

with open("cleaning_golden.tsv", "w", encoding="utf-8") as f:
    f.write("raw\texpected\n")
    for raw in RAW:
        f.write(f"{esc(raw)}\t{esc(clean(raw))}\n")
