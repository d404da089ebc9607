"""Corpus preparation: ingestion, tokenization, dictionary, keyword expansion.

Turns raw timestamped posts into marked events: each post becomes an
event at a fractional-day timestamp on its author's node, carrying a
binary word-presence vector over a fixed frequency-ranked dictionary.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone

from .events import MarkedEvent, NodeRoster, RawPost
from .exceptions import ConfigError, DataError

logger = logging.getLogger("hbtm.corpus")

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_NON_TOKEN_RE = re.compile(r"[^a-z0-9_]+")

SECONDS_PER_DAY = 86400.0

# Defaults for keyword expansion; thresholds are configuration, not data.
RATIO_MIN_DEFAULT = 10.0
COUNT_MIN_DEFAULT = 5
MAX_ITER_DEFAULT = 5


def tokenize(text: str, stopwords=frozenset()) -> list[str]:
    """Split text into lowercase tokens.

    URLs and @-mentions are removed whole; everything else is split on
    non-alphanumeric runs, so hashtags lose their '#' and hyphenated or
    slashed compounds split into parts.  Stop words are dropped.
    Idempotent: tokenizing a joined token list returns the same list.
    """
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    tokens = _NON_TOKEN_RE.split(text.lower())
    return [t for t in tokens if t and t not in stopwords]


def load_stopwords(path) -> frozenset:
    """Read a stop-word file, one lowercase word per line."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def _parse_epoch(epoch) -> datetime:
    if isinstance(epoch, datetime):
        dt = epoch
    elif isinstance(epoch, date):
        dt = datetime(epoch.year, epoch.month, epoch.day)
    elif isinstance(epoch, str):
        try:
            dt = datetime.fromisoformat(epoch)
        except ValueError as exc:
            raise ConfigError(f"bad epoch {epoch!r}: {exc}") from None
    else:
        raise ConfigError(f"bad epoch {epoch!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _parse_timestamp(value, epoch_dt: datetime, line: int) -> float:
    """Fractional days since the epoch; numbers pass through as days."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        raw = value.strip().replace("Z", "+00:00")
        try:
            # bare numbers are day offsets, anything else is ISO-8601
            return float(raw)
        except ValueError:
            pass
        try:
            dt = datetime.fromisoformat(raw)
        except ValueError:
            raise DataError(f"bad timestamp {value!r} at line {line}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return (dt - epoch_dt).total_seconds() / SECONDS_PER_DAY
    raise DataError(f"bad timestamp {value!r} at line {line}")


_REQUIRED_FIELDS = ("post_id", "timestamp", "node_id", "text")


def _parse_attrs(value, line: int) -> dict:
    if not value:
        return {}
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise DataError(f"bad attrs at line {line}") from None
    if not isinstance(value, dict):
        raise DataError(f"bad attrs at line {line}")
    return value


def _post_from_record(rec: dict, epoch_dt: datetime, line: int) -> RawPost:
    for name in _REQUIRED_FIELDS:
        if rec.get(name) in (None, ""):
            raise DataError(f"missing field {name} at line {line}")
    attrs = _parse_attrs(rec.get("attrs"), line)
    try:
        return RawPost(
            post_id=str(rec["post_id"]),
            timestamp=_parse_timestamp(rec["timestamp"], epoch_dt, line),
            node_id=str(rec["node_id"]),
            text=str(rec["text"]),
            node_attrs={str(k): str(v) for k, v in attrs.items()},
        )
    except DataError as exc:
        raise DataError(f"{exc} (line {line})") from None


def ingest_posts(path, epoch, format: str = "jsonl") -> list[RawPost]:
    """Read posts from JSONL or CSV and return them sorted time-ascending.

    Timestamps are converted to fractional days since ``epoch``; ties
    keep the file order.  Any record that fails to parse raises an
    error naming its line number.
    """
    epoch_dt = _parse_epoch(epoch)
    posts: list[RawPost] = []
    if format == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(
                        f"unparseable record at line {line_no}: {exc.msg}"
                    ) from None
                posts.append(_post_from_record(rec, epoch_dt, line_no))
    elif format == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            extra = [c for c in reader.fieldnames
                     if c not in _REQUIRED_FIELDS and c != "attrs"]
            for line_no, row in enumerate(reader, start=2):
                rec = {k: row.get(k) for k in _REQUIRED_FIELDS}
                attrs = _parse_attrs(row.get("attrs"), line_no)
                # spare columns travel as node attributes
                spare = {c: row[c] for c in extra if row.get(c)}
                rec["attrs"] = {**spare, **attrs}
                posts.append(_post_from_record(rec, epoch_dt, line_no))
    else:
        raise ConfigError(f"unknown input format {format!r}")
    posts.sort(key=lambda p: p.timestamp)
    return posts


@dataclass
class Dictionary:
    """Ordered restricted vocabulary; position in ``words`` is the mark index."""

    words: list[str]

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise DataError("dictionary contains duplicate words")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @property
    def n_words(self) -> int:
        return len(self.words)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for word in self.words:
                fh.write(word + "\n")

    @classmethod
    def load(cls, path) -> "Dictionary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.strip()])


def build_dictionary(posts, stopwords=frozenset(), n_words: int = 425) -> Dictionary:
    """Rank tokens by total corpus frequency and keep the top ``n_words``.

    Frequency ties break lexicographically, so the result is invariant
    under permutation of the posts.  If the corpus has fewer distinct
    tokens than requested, all of them are kept.
    """
    if n_words < 1:
        raise ConfigError(f"n_words must be >= 1, got {n_words}")
    counts = Counter()
    for post in posts:
        counts.update(tokenize(post.text, stopwords))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked[:n_words]]
    if len(words) < n_words:
        logger.info("corpus has only %d distinct tokens (%d requested)",
                    len(words), n_words)
    return Dictionary(words)


@dataclass
class KeywordExpansion:
    """Result of iterative keyword expansion.

    ``keywords`` always contains the seeds.  ``added_per_round`` records
    what each pass contributed; ``converged`` is False when the round
    cap stopped a still-growing list.  ``warning`` is set when no post
    matched the seeds at all.
    """

    keywords: set[str]
    seeds: set[str]
    added_per_round: list[set[str]] = field(default_factory=list)
    converged: bool = True
    warning: bool = False

    def __iter__(self):
        return iter(self.keywords)

    def __contains__(self, word: str) -> bool:
        return word in self.keywords

    def __len__(self) -> int:
        return len(self.keywords)

    @property
    def n_rounds(self) -> int:
        return len(self.added_per_round)


def expand_keywords(posts, seeds, ratio_min: float = RATIO_MIN_DEFAULT,
                    count_min: int = COUNT_MIN_DEFAULT,
                    max_iter: int = MAX_ITER_DEFAULT,
                    stopwords=frozenset()) -> KeywordExpansion:
    """Grow a seed keyword set by document-frequency enrichment.

    A pass matches every post containing a current keyword, then admits
    each word that appears in at least ``count_min`` matched posts and
    whose share of matched posts exceeds its share of all posts by a
    factor of at least ``ratio_min``.  Passes repeat until no word is
    added or ``max_iter`` passes have run.
    """
    seeds = {w.lower() for w in seeds}
    if not seeds:
        raise ConfigError("seed keyword set must be nonempty")
    if not ratio_min > 1:
        raise ConfigError(f"ratio_min must exceed 1, got {ratio_min}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")

    token_sets = [frozenset(tokenize(p.text, stopwords)) for p in posts]
    n_all = len(token_sets)
    if n_all == 0:
        return KeywordExpansion(set(seeds), seeds, warning=True)
    df_all = Counter()
    for toks in token_sets:
        df_all.update(toks)

    keywords = set(seeds)
    if not any(toks & keywords for toks in token_sets):
        logger.warning("no post matches the seed keywords %s", sorted(seeds))
        return KeywordExpansion(keywords, seeds, warning=True)

    added_per_round: list[set[str]] = []
    converged = False
    for _ in range(max_iter):
        matched = [toks for toks in token_sets if toks & keywords]
        n_matched = len(matched)
        df_matched = Counter()
        for toks in matched:
            df_matched.update(toks)
        added = set()
        for word, count in df_matched.items():
            if word in keywords or count < count_min:
                continue
            ratio = (count / n_matched) / (df_all[word] / n_all)
            if ratio >= ratio_min:
                added.add(word)
        if not added:
            converged = True
            break
        added_per_round.append(added)
        keywords |= added
    else:
        # one extra pass decides whether the cap hid a fixed point
        matched = [toks for toks in token_sets if toks & keywords]
        df_matched = Counter()
        for toks in matched:
            df_matched.update(toks)
        converged = not any(
            w not in keywords and c >= count_min
            and (c / len(matched)) / (df_all[w] / n_all) >= ratio_min
            for w, c in df_matched.items())
    if not converged:
        logger.warning("keyword expansion stopped by the %d-pass cap "
                       "while still growing", max_iter)
    return KeywordExpansion(keywords, seeds, added_per_round, converged)


def filter_by_keywords(posts, keywords, stopwords=frozenset()) -> list[RawPost]:
    """Keep exactly the posts whose token set intersects ``keywords``."""
    keywords = {w.lower() for w in keywords}
    return [p for p in posts
            if keywords & set(tokenize(p.text, stopwords))]


def to_marked_events(posts, dictionary: Dictionary,
                     node_roster: NodeRoster,
                     stopwords=frozenset()) -> list[MarkedEvent]:
    """Convert posts to time-sorted events with binary presence marks.

    ``mark[w] = 1`` iff dictionary word ``w`` occurs in the post at
    least once.  Equal timestamps keep the input order.  Posts whose
    text shares no word with the dictionary yield all-zero marks; they
    stay in the output but are counted in a log message.
    """
    unknown = sorted({p.node_id for p in posts} - set(node_roster.ids))
    if unknown:
        raise DataError(f"unknown node ids: {unknown}")
    events = []
    n_zero = 0
    for pos, post in enumerate(posts):
        mark = [0] * dictionary.n_words
        for token in tokenize(post.text, stopwords):
            idx = dictionary.index.get(token)
            if idx is not None:
                mark[idx] = 1
        if not any(mark):
            n_zero += 1
        events.append((post.timestamp, pos, MarkedEvent(
            timestamp=post.timestamp,
            node_index=node_roster.index(post.node_id),
            mark=mark,
            post_id=post.post_id,
        )))
    events.sort(key=lambda item: item[:2])
    if n_zero:
        logger.info("%d of %d events carry an all-zero mark", n_zero, len(events))
    return [e for _, _, e in events]
