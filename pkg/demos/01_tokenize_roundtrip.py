"""Turn a two-staff piano score into a flat token stream and back.

Run:  python demos/01_tokenize_roundtrip.py
"""

from gradus.fixtures import generate_piece
from gradus.lmx import Vocabulary, decode, encode
from gradus.score import serialize_musicxml

score = generate_piece(index=0, complexity=0.35, seed=7)
print(f"piece: {score.source_id!r}, {len(score.measures)} measures, "
      f"genre {score.genre!r}")

tokens = encode(score)
print(f"\nencoded to {len(tokens)} tokens; the first measure reads:")
first = tokens[:tokens.index("measure", 1)]
print("  " + " ".join(first))

xml = serialize_musicxml(score)
print(f"\nthe same music as MusicXML is {len(xml)} characters; "
      f"the token text is {len(' '.join(tokens))} characters "
      f"({len(xml) / len(' '.join(tokens)):.1f}x smaller)")

back = decode(tokens)
again = encode(back)
print(f"\ndecode then re-encode reproduces the stream exactly: "
      f"{again == tokens}")

vocab = Vocabulary.from_corpus([tokens])
ids = vocab.encode_ids(tokens)
print(f"\nvocabulary has {len(vocab)} entries "
      f"(specials {list(vocab.tokens[:5])} lead the table); "
      f"ids round-trip: {vocab.decode_ids(ids) == tokens}")
