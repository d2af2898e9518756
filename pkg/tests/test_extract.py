import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxpref import extract
from cvxpref.errors import InputError

DATA = Path(__file__).parent / "data" / "example_conversations.jsonl"


def make_conv(n_agent, cid="c", system=None, trailing_user=False):
    turns = []
    for i in range(n_agent):
        turns.append({"role": "user", "content": f"question {i}"})
        turns.append({"role": "agent", "content": f"answer {i}"})
    if trailing_user:
        turns.append({"role": "user", "content": "bye"})
    return extract.Conversation(cid, tuple(turns), system)


def test_example_conversations():
    stats = extract.CorpusStats()
    with DATA.open() as fh:
        triplets = list(extract.extract_corpus(extract.read_jsonl(fh, stats), stats))
    assert [t.source_id for t in triplets] == ["example-music", "example-chemistry", "example-conditioning"]
    assert all(t.pair_index == 1 for t in triplets)
    starts = [(t.chosen[:20], t.rejected[:20]) for t in triplets]
    assert starts[0] == ("Certainly! The Baroq", "During the Classical")
    assert starts[1][0].startswith("Of course! Balancing")
    assert starts[1][1].startswith("Absolutely! Let's ba")
    assert starts[2][0].startswith("Certainly! Classical")
    assert starts[2][1].startswith("Absolutely, you've g")
    assert triplets[0].prompt.startswith("system: You are Dolphin")
    assert triplets[0].prompt.splitlines()[-1].startswith("user: Hi! I'm studying")
    assert stats.to_dict()["triplets"] == 3 and stats.conversations == 3


def test_single_exchange_yields_nothing():
    assert extract.extract_alternating(make_conv(1)) == []


def test_four_exchanges_yield_three_pairs():
    out = extract.extract_alternating(make_conv(4, trailing_user=True))
    assert [t.pair_index for t in out] == [1, 2, 3]
    assert [(t.chosen, t.rejected) for t in out] == [(f"answer {i}", f"answer {i + 1}") for i in range(3)]
    assert out[1].prompt == "user: question 0\nagent: answer 0\nuser: question 1"


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), system=st.none() | st.text(min_size=1, max_size=10).filter(str.strip))
def test_pair_count_order_and_prefix(n, system):
    conv = make_conv(n, system=system)
    out = extract.extract_alternating(conv)
    assert len(out) == max(n - 1, 0)
    assert [t.pair_index for t in out] == list(range(1, n))
    for a, b in zip(out, out[1:]):
        assert b.prompt.startswith(a.prompt)
        assert a.rejected == b.chosen


def test_identical_pair_skipped():
    turns = ({"role": "user", "content": "q"}, {"role": "agent", "content": "same "},
             {"role": "user", "content": "q2"}, {"role": "agent", "content": "same"})
    conv = extract.Conversation("dup", turns)
    stats = extract.CorpusStats()
    assert list(extract.extract_corpus([conv], stats)) == []
    assert stats.skipped_pairs == 1


@pytest.mark.parametrize("turns", [
    [{"role": "user", "content": "only"}],
    [{"role": "agent", "content": "a"}, {"role": "user", "content": "b"}],
    [{"role": "user", "content": "a"}, {"role": "user", "content": "b"}],
    [{"role": "user", "content": "a"}, {"role": "agent", "content": 3}],
])
def test_malformed_conversations_rejected(turns):
    with pytest.raises(InputError):
        extract.Conversation("bad", tuple(turns))


def test_read_jsonl_counts_bad_lines():
    good = json.dumps({"id": "g", "turns": [{"role": "user", "content": "a"}, {"role": "agent", "content": "b"}]})
    lines = [good, "{not json", "", json.dumps({"id": "x"}), json.dumps({"turns": [{"role": "agent", "content": "b"}]})]
    stats = extract.CorpusStats()
    convs = list(extract.read_jsonl(lines, stats))
    assert [c.id for c in convs] == ["g"]
    assert stats.skipped_records == 3 and len(stats.errors) == 3


def test_empty_stream():
    stats = extract.CorpusStats()
    assert list(extract.extract_corpus(extract.read_jsonl([], stats), stats)) == []
    assert stats.to_dict()["triplets_per_conversation"] == 0.0


def test_synthetic_corpus_count():
    rng = np.random.default_rng(0)
    counts = rng.integers(1, 9, size=100)
    stats = extract.CorpusStats()
    out = list(extract.extract_corpus((make_conv(int(k), f"c{i}") for i, k in enumerate(counts)), stats))
    assert len(out) == int(np.sum(counts - 1)) == stats.triplets
    assert stats.conversations == 100


@pytest.mark.parametrize("N,train", [(65606, 59045), (10, 9), (1, 0)])
def test_split_sizes(N, train):
    tr, ev = extract.split_train_eval(range(N), 0.9, seed=0)
    assert (len(tr), len(ev)) == (train, N - train)
    assert sorted(tr + ev) == list(range(N))


def test_split_is_deterministic():
    a = extract.split_train_eval(range(100), seed=3)
    b = extract.split_train_eval(range(100), seed=3)
    c = extract.split_train_eval(range(100), seed=4)
    assert a == b and a != c
    with pytest.raises(InputError):
        extract.split_train_eval(range(4), 1.0)


def test_chatml_template():
    conv = make_conv(2, system="be brief")
    t = extract.extract_alternating(conv, extract.chatml_template)[0]
    assert t.prompt == "<|im_start|>system\nbe brief<|im_end|>\n<|im_start|>user\nquestion 0<|im_end|>"


def test_jsonl_round_trip(tmp_path):
    triplets = extract.extract_alternating(make_conv(5, system="s"))
    assert extract.write_jsonl(triplets, tmp_path / "t.jsonl") == 4
    assert extract.read_triplets(tmp_path / "t.jsonl") == triplets
    (tmp_path / "bad.jsonl").write_text('{"prompt": "x"}\n')
    with pytest.raises(InputError):
        extract.read_triplets(tmp_path / "bad.jsonl")
