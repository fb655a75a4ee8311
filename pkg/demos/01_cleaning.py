"""Tweet cleaning, tokenization and stop-word removal, step by step."""
from __future__ import annotations

from clsboost.textprep import clean_text, default_stoplist, preprocess, tokenize

raw = "RT @user: Tested POSITIVE today :( #covid https://t.co/abc \U0001f637 café"

# URLs go first, then @mentions, then #tags; case folding is ASCII-only
cleaned = clean_text(raw)
print("raw:     ", raw)
print("cleaned: ", cleaned)

# cleaning is idempotent
assert clean_text(cleaned) == cleaned

tokens = tokenize(cleaned)
print("tokens:  ", tokens)

stop = default_stoplist()
print(f"{len(stop)} stop words, e.g. {sorted(stop)[:8]}")
print("content: ", preprocess(raw))

# each stage can be switched off
print("no clean:", preprocess("Tested POSITIVE today", clean=False, stopwords=False))
