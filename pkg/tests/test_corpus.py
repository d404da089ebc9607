"""Tests for ingestion, tokenization, dictionary, and keyword expansion."""

import pytest

from hbtm.corpus import (
    Dictionary,
    build_dictionary,
    expand_keywords,
    filter_by_keywords,
    ingest_posts,
    load_stopwords,
    to_marked_events,
    tokenize,
)
from hbtm.events import NodeRoster, RawPost
from hbtm.exceptions import ConfigError, DataError


def make_post(i, t, node="n0", text="hello", attrs=None):
    return RawPost(post_id=f"p{i}", timestamp=t, node_id=node, text=text,
                   node_attrs=attrs or {})


class TestTokenize:
    def test_strips_urls_hashtags_and_punctuation(self):
        got = tokenize("Stay home! #socialdistancing https://t.co/x")
        assert got == ["stay", "home", "socialdistancing"]

    def test_stopwords_removed(self):
        assert tokenize("the the the", {"the"}) == []

    def test_mentions_removed_and_hyphens_split(self):
        assert tokenize("@SecAzar COVID-19 update") == ["covid", "19", "update"]

    def test_www_urls_and_slashes(self):
        assert tokenize("see www.example.com/a risk/benefit") == [
            "see", "risk", "benefit"]

    def test_empty_text(self):
        assert tokenize("") == []
        assert tokenize("!!! ???") == []

    def test_idempotent(self):
        texts = [
            "Stay home! #socialdistancing https://t.co/x",
            "@SecAzar COVID-19 update, re-test: a/b www.x.org",
            "He said: \"don't panic\" #Calm",
        ]
        for text in texts:
            once = tokenize(text, {"a"})
            again = tokenize(" ".join(once), {"a"})
            assert again == once


class TestDictionary:
    def test_top_words_with_lexicographic_ties(self):
        posts = [
            make_post(0, 0.0, text="test test test risk home"),
            make_post(1, 1.0, text="test test risk home virus"),
            make_post(2, 2.0, text="risk home"),
        ]
        # frequencies: test 5, risk 3, home 3, virus 1
        d = build_dictionary(posts, n_words=3)
        assert d.words == ["test", "home", "risk"]
        assert d.index == {"test": 0, "home": 1, "risk": 2}

    def test_permutation_invariant(self):
        posts = [
            make_post(0, 0.0, text="b a c a"),
            make_post(1, 1.0, text="c b"),
            make_post(2, 2.0, text="a c"),
        ]
        d1 = build_dictionary(posts, n_words=3)
        d2 = build_dictionary(list(reversed(posts)), n_words=3)
        assert d1.words == d2.words

    def test_fewer_tokens_than_requested(self):
        posts = [make_post(0, 0.0, text="only")]
        d = build_dictionary(posts, n_words=425)
        assert d.words == ["only"]
        assert d.n_words == 1

    def test_save_load_round_trip(self, tmp_path):
        d = Dictionary(["alpha", "beta", "gamma"])
        path = tmp_path / "dict.txt"
        d.save(path)
        assert Dictionary.load(path).words == d.words

    def test_duplicate_words_rejected(self):
        with pytest.raises(DataError):
            Dictionary(["a", "a"])

    def test_bad_size_rejected(self):
        with pytest.raises(ConfigError):
            build_dictionary([], n_words=0)


def expansion_corpus():
    """4 posts pairing covid with quarantine, 96 unrelated posts."""
    posts = [make_post(i, float(i), text="covid quarantine lockdown")
             for i in range(4)]
    posts += [make_post(i, float(i), text="weather sports news")
              for i in range(4, 100)]
    return posts


class TestExpandKeywords:
    def test_enriched_word_added(self):
        result = expand_keywords(expansion_corpus(), {"covid"},
                                 ratio_min=5, count_min=2)
        # quarantine: in 4/4 matched posts vs 4/100 overall, ratio 25
        assert "quarantine" in result.keywords
        assert "lockdown" in result.keywords
        assert "weather" not in result.keywords
        assert result.converged and not result.warning

    def test_no_matching_posts_warns(self):
        posts = [make_post(0, 0.0, text="weather news")]
        result = expand_keywords(posts, {"covid"})
        assert result.keywords == {"covid"}
        assert result.warning

    def test_huge_ratio_returns_seeds(self):
        result = expand_keywords(expansion_corpus(), {"covid"},
                                 ratio_min=1e9, count_min=1)
        assert result.keywords == {"covid"}
        assert result.converged

    def test_superset_of_seeds_and_monotone_in_ratio(self):
        posts = expansion_corpus()
        previous = None
        for ratio in (50.0, 10.0, 3.0, 1.5):
            got = expand_keywords(posts, {"covid"}, ratio_min=ratio,
                                  count_min=1).keywords
            assert got >= {"covid"}
            if previous is not None:
                assert got >= previous
            previous = got

    def test_round_cap_flags_unconverged(self):
        # chain: each word enriches the next, one per pass
        chain = ["w0", "w1", "w2", "w3", "w4"]
        posts = []
        k = 0
        for a, b in zip(chain, chain[1:]):
            for _ in range(3):
                posts.append(make_post(k, float(k), text=f"{a} {b}"))
                k += 1
        for _ in range(300):
            posts.append(make_post(k, float(k), text="filler noise"))
            k += 1
        capped = expand_keywords(posts, {"w0"}, ratio_min=2, count_min=2,
                                 max_iter=1)
        full = expand_keywords(posts, {"w0"}, ratio_min=2, count_min=2,
                               max_iter=10)
        assert not capped.converged
        assert full.converged
        assert set(full.keywords) >= set(capped.keywords)
        assert set(full.keywords) == set(chain)

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError):
            expand_keywords([], set())


class TestFilterByKeywords:
    def test_keeps_matching_posts_in_order(self):
        posts = [
            make_post(0, 0.0, text="weather today"),
            make_post(1, 1.0, text="risk of rain"),
            make_post(2, 2.0, text="sports"),
        ]
        got = filter_by_keywords(posts, {"risk"})
        assert [p.post_id for p in got] == ["p1"]

    def test_union_semantics(self):
        posts = [
            make_post(0, 0.0, text="new vaccine trial"),
            make_post(1, 1.0, text="a treatment works"),
            make_post(2, 2.0, text="nothing relevant"),
        ]
        got = filter_by_keywords(posts, {"vaccine", "treatment"})
        assert [p.post_id for p in got] == ["p0", "p1"]


class TestToMarkedEvents:
    def test_presence_marks(self):
        d = Dictionary(["test", "risk", "home"])
        roster = NodeRoster(ids=["n0"])
        posts = [make_post(0, 0.0, text="test test risk")]
        events = to_marked_events(posts, d, roster)
        assert list(events[0].mark) == [1, 1, 0]
        assert events[0].node_index == 0

    def test_all_zero_mark_retained(self):
        d = Dictionary(["test"])
        roster = NodeRoster(ids=["n0"])
        events = to_marked_events([make_post(0, 0.0, text="nothing here")],
                                  d, roster)
        assert len(events) == 1
        assert list(events[0].mark) == [0]

    def test_time_sorted_with_stable_ties(self):
        d = Dictionary(["x"])
        roster = NodeRoster(ids=["a", "b"])
        posts = [
            make_post(0, 5.0, node="a", text="x"),
            make_post(1, 1.0, node="b", text="x"),
            make_post(2, 5.0, node="b", text="x"),
        ]
        events = to_marked_events(posts, d, roster)
        assert [e.post_id for e in events] == ["p1", "p0", "p2"]
        times = [e.timestamp for e in events]
        assert times == sorted(times)

    def test_unknown_node_listed(self):
        d = Dictionary(["x"])
        roster = NodeRoster(ids=["a"])
        posts = [make_post(0, 0.0, node="ghost", text="x"),
                 make_post(1, 1.0, node="phantom", text="x")]
        with pytest.raises(DataError, match="ghost.*phantom|phantom.*ghost"):
            to_marked_events(posts, d, roster)


class TestIngestPosts:
    def test_jsonl_sorted_and_day_offsets(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text(
            '{"post_id": "a", "timestamp": "2020-01-02T00:00:00Z",'
            ' "node_id": "n1", "text": "hi"}\n'
            '{"post_id": "b", "timestamp": "2020-01-01T00:00:00Z",'
            ' "node_id": "n2", "text": "ho"}\n'
            '{"post_id": "c", "timestamp": "2020-01-03T12:00:00Z",'
            ' "node_id": "n1", "text": "hey", "attrs": {"party": "D"}}\n')
        posts = ingest_posts(path, epoch="2020-01-01")
        assert [p.post_id for p in posts] == ["b", "a", "c"]
        assert [p.timestamp for p in posts] == [0.0, 1.0, 2.5]
        assert posts[2].node_attrs == {"party": "D"}

    def test_numeric_timestamps_pass_through(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"post_id": "a", "timestamp": 1.25, "node_id": "n",'
                        ' "text": "t"}\n')
        posts = ingest_posts(path, epoch="2020-01-01")
        assert posts[0].timestamp == 1.25

    def test_empty_file(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text("")
        assert ingest_posts(path, epoch="2020-01-01") == []

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text(
            '{"post_id": "a", "timestamp": 0.0, "node_id": "n", "text": "t"}\n'
            '{"post_id": "b", "timestamp": 1.0, "text": "t"}\n')
        with pytest.raises(DataError, match="missing field node_id at line 2"):
            ingest_posts(path, epoch="2020-01-01")

    def test_unparseable_json_names_line(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"post_id": "a"\n')
        with pytest.raises(DataError, match="line 1"):
            ingest_posts(path, epoch="2020-01-01")

    def test_pre_epoch_timestamp_rejected(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        path.write_text('{"post_id": "a", "timestamp": "2019-12-31T00:00:00",'
                        ' "node_id": "n", "text": "t"}\n')
        with pytest.raises(DataError, match="line 1"):
            ingest_posts(path, epoch="2020-01-01")

    def test_csv_with_spare_attr_column(self, tmp_path):
        path = tmp_path / "posts.csv"
        path.write_text(
            "post_id,timestamp,node_id,text,party\n"
            'a,2020-01-02T00:00:00,n1,"hello there",R\n')
        posts = ingest_posts(path, epoch="2020-01-01", format="csv")
        assert posts[0].timestamp == 1.0
        assert posts[0].node_attrs == {"party": "R"}

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ingest_posts(tmp_path / "x", epoch="2020-01-01", format="xml")


def test_load_stopwords(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("The\nand\n\nof\n")
    assert load_stopwords(path) == {"the", "and", "of"}
