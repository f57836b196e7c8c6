#!/usr/bin/env python3
"""Parser adapter: tokens TSV in, CoNLL-U out.

Reads the ``tokens_<split>.tsv`` file written by ``kgan prepare
--export-tokens`` (one ``instance_id<TAB>space-joined tokens`` line each) and
emits CoNLL-U blocks keyed by ``# sent_id = <instance_id>``, parsing with
spaCy over the pre-tokenized words so the token alignment is exact.

Any other parser can be substituted as long as it honors the same contract:
one block per instance id, token count identical to the input line.

    python scripts/spacy_to_conllu.py tokens_train.tsv > train.conllu
"""

import sys


def main():
    if len(sys.argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    try:
        import spacy
        from spacy.tokens import Doc
    except ImportError:
        print("spaCy is not installed; `pip install spacy` and download a model "
              "(e.g. en_core_web_sm), or plug in another parser honoring the "
              "same tokens-in / CoNLL-U-out contract.", file=sys.stderr)
        return 1

    nlp = spacy.load("en_core_web_sm", exclude=["ner", "lemmatizer"])

    with open(sys.argv[1], encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            inst_id, _, joined = line.partition("\t")
            words = joined.split(" ")
            doc = Doc(nlp.vocab, words=words)
            for _, proc in nlp.pipeline:
                doc = proc(doc)
            print(f"# sent_id = {inst_id}")
            for i, tok in enumerate(doc):
                head = 0 if tok.head.i == tok.i else tok.head.i + 1
                print(f"{i + 1}\t{tok.text}\t_\t{tok.pos_}\t{tok.tag_}\t_\t{head}\t{tok.dep_}\t_\t_")
            print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
