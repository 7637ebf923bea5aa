"""Item metadata, canonical texts, synopsis prompts and embedding tables."""

import json
import string

import numpy as np
import pytest

from src.textprep.augment import TranscriptLog, augment_synopsis, build_canonical_texts, write_texts
from src.textprep.embeddings import (
    EmbeddingTable,
    drop_rows,
    l2_normalize,
    load_embedding_table,
    save_embedding_table,
)
from src.textprep.metadata import ItemMetadata, canonical_text_na, load_item_metadata
from src.textprep.prompts import build_synopsis_prompt
from src.textprep.providers import StubSynopsisProvider, make_provider
from src.utils.errors import (
    ArgumentError,
    DimensionMismatchError,
    DuplicateKeyError,
    ParseError,
    ProviderError,
)
from tests.helpers import write_lines

TOY_STORY = ItemMetadata("1", "Toy Story (1995)", ("Animation", "Children's", "Comedy"), ("pixar", "fun"))


class FailingProvider:
    name = "failing"

    def generate(self, prompt):
        raise TimeoutError("request timed out")


class TestCanonicalText:
    def test_concatenation(self):
        assert canonical_text_na(TOY_STORY).text == "toy story (1995) animation children's comedy pixar fun"

    def test_title_only(self):
        assert canonical_text_na(ItemMetadata("2", "X")).text == "x"

    def test_genre_field_is_split_on_pipes(self):
        meta = ItemMetadata.from_source("3", "Se7en", "Drama|Mystery|Thriller")
        assert canonical_text_na(meta).text == "se7en drama mystery thriller"

    def test_random_strings_lose_case_and_pipes(self):
        rng = np.random.default_rng(0)
        alphabet = string.ascii_letters + "|: \t" + "ÄÉß"

        def word():
            return "".join(rng.choice(list(alphabet), size=int(rng.integers(1, 12))))

        for _ in range(300):
            title = "T" + word()
            meta = ItemMetadata("i", title, tuple(word() for _ in range(2)), tuple(word() for _ in range(2)))
            text = canonical_text_na(meta).text
            assert "|" not in text
            assert text == text.lower()
            assert "  " not in text

    def test_empty_title_rejected(self):
        with pytest.raises(ArgumentError):
            ItemMetadata("4", "   ")

    def test_metadata_file_with_tags(self, tmp_path):
        items = write_lines(tmp_path / "movies.dat", ["1::Toy Story (1995)::Animation|Children's|Comedy"])
        tags = write_lines(tmp_path / "tags.dat", ["7::1::pixar::1", "8::1::fun::2", "9::1::pixar::3"])
        catalogue = load_item_metadata(items, "movielens_dat", tags_path=tags)
        assert catalogue["1"] == TOY_STORY

    def test_metadata_bad_line(self, tmp_path):
        items = write_lines(tmp_path / "movies.tsv", ["1\tonly two fields"])
        with pytest.raises(ParseError):
            load_item_metadata(items, "tsv")


class TestPrompt:
    def test_template(self):
        prompt = build_synopsis_prompt(TOY_STORY)
        assert "100-150-word synopsis" in prompt.user
        assert "- Title: Toy Story (1995)" in prompt.user
        assert prompt.system == "You are a helpful assistant."

    def test_empty_tags_marker(self):
        prompt = build_synopsis_prompt(ItemMetadata("2", "X", ("Drama",)))
        assert "- Tags: []" in prompt.user

    def test_deterministic(self):
        assert build_synopsis_prompt(TOY_STORY) == build_synopsis_prompt(TOY_STORY)


class TestAugmentation:
    def test_stub_is_stored_verbatim(self, tmp_path):
        transcript = TranscriptLog(tmp_path / "transcript.jsonl")
        text = augment_synopsis(TOY_STORY, StubSynopsisProvider(), transcript)
        assert text.mode == "A"
        assert text.text == "SYNOPSIS(Toy Story (1995))"
        (record,) = transcript.records()
        assert record["item_id"] == "1" and record["response"] == text.text

    def test_failure_raises_without_transcript(self, tmp_path):
        transcript = TranscriptLog(tmp_path / "transcript.jsonl")
        with pytest.raises(ProviderError) as info:
            augment_synopsis(TOY_STORY, FailingProvider(), transcript)
        assert info.value.item_id == "1"
        assert transcript.records() == []

    def test_fallback_to_na(self):
        text = augment_synopsis(TOY_STORY, FailingProvider(), fallback_to_na=True)
        assert text.mode == "NA" and text.fallback
        assert text.text == canonical_text_na(TOY_STORY).text
        assert "fallback" in text.provenance

    def test_catalogue_keeps_order_with_workers(self, tmp_path):
        metas = [ItemMetadata(str(i), f"Movie {i}") for i in range(20)]
        texts = build_canonical_texts(metas, mode="A", provider=StubSynopsisProvider(), workers=4)
        assert [t.item_id for t in texts] == [m.item_id for m in metas]
        write_texts(texts, tmp_path / "texts.jsonl")
        lines = (tmp_path / "texts.jsonl").read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[3])["text"] == "SYNOPSIS(Movie 3)"

    def test_stub_needs_no_keys(self):
        assert make_provider("stub").name == "stub"

    def test_unknown_provider(self):
        with pytest.raises(ArgumentError):
            make_provider("carrier-pigeon")


class TestEmbeddingTables:
    def test_load(self, tmp_path):
        path = write_lines(tmp_path / "e.tsv", ["a\t1\t2\t3", "b\t4\t5\t6"])
        table = load_embedding_table(path, "audio", "blf")
        assert table.dim == 3 and len(table) == 2
        np.testing.assert_array_equal(table.row("b"), [4.0, 5.0, 6.0])

    def test_width_mismatch(self, tmp_path):
        path = write_lines(tmp_path / "e.tsv", ["a\t1\t2\t3", "b\t4\t5\t6\t7"])
        with pytest.raises(DimensionMismatchError) as info:
            load_embedding_table(path, "audio", "blf")
        assert info.value.item_id == "b"

    def test_non_numeric_cell(self, tmp_path):
        path = write_lines(tmp_path / "e.tsv", ["a\t1\tx\t3"])
        with pytest.raises(ParseError) as info:
            load_embedding_table(path, "visual", "cnn")
        assert "'a'" in str(info.value) and "column 2" in str(info.value)

    def test_duplicate_key(self, tmp_path):
        path = write_lines(tmp_path / "e.tsv", ["a\t1", "a\t2"])
        with pytest.raises(DuplicateKeyError):
            load_embedding_table(path, "text", "sbert_NA")

    def test_l2_normalize(self):
        table = EmbeddingTable("visual", "cnn", ("a", "b", "c"), np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]))
        normalized = l2_normalize(table)
        np.testing.assert_allclose(normalized.row("a"), [0.6, 0.8])
        np.testing.assert_array_equal(normalized.row("b"), [1.0, 0.0])
        np.testing.assert_array_equal(normalized.row("c"), [0.0, 0.0])
        assert normalized.zero_rows == ("c",)
        assert drop_rows(normalized, normalized.zero_rows).item_ids == ("a", "b")

    def test_save_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        table = EmbeddingTable("audio", "i_vec", ("1", "2"), rng.normal(size=(2, 4)))
        save_embedding_table(table, tmp_path / "out.tsv")
        loaded = load_embedding_table(tmp_path / "out.tsv", "audio", "i_vec")
        np.testing.assert_array_equal(loaded.matrix, table.matrix)
