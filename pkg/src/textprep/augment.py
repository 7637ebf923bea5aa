"""LLM-based text augmentation with a transcript of every prompt/response pair."""

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Union

from src.textprep.metadata import CanonicalText, ItemMetadata, canonical_text_na
from src.textprep.prompts import PromptPair, build_synopsis_prompt
from src.textprep.providers import SynopsisProvider
from src.utils.errors import ArgumentError, ProviderError
from src.utils.log import get_logger

logger = get_logger(__name__)


class TranscriptLog:
    """Append-only JSON-lines sink; concurrent writers are serialized."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, item_id: str, prompt: PromptPair, response: str, provider: str):
        record = {
            "item_id": item_id,
            "system": prompt.system,
            "user": prompt.user,
            "response": response,
            "provider": provider,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    def records(self) -> List[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]


def _render_transcript(prompt: PromptPair, response: str) -> str:
    return f"[system]\n{prompt.system}\n[user]\n{prompt.user}\n[assistant]\n{response}"


def augment_synopsis(
    meta: ItemMetadata,
    provider: SynopsisProvider,
    transcript: Optional[TranscriptLog] = None,
    fallback_to_na: bool = False,
) -> CanonicalText:
    """
    Ask the provider for a synopsis and keep its answer verbatim.

    Args:
        meta: Item to describe
        provider: Synopsis provider
        transcript: Optional sink receiving the prompt/response pair
        fallback_to_na: Return the NA text (flagged) instead of raising on failure

    Returns:
        A-mode CanonicalText, or a flagged NA-mode text on fallback
    """
    prompt = build_synopsis_prompt(meta)
    try:
        response = provider.generate(prompt)
        if not isinstance(response, str) or not response.strip():
            raise ValueError("empty response")
    except Exception as e:
        logger.warning(f"Synopsis provider '{provider.name}' failed for item {meta.item_id}: {e}")
        if fallback_to_na:
            na = canonical_text_na(meta)
            return replace(na, provenance=f"fallback to NA: provider '{provider.name}' failed: {e}", fallback=True)
        raise ProviderError(meta.item_id, str(e)) from e

    if transcript is not None:
        transcript.append(meta.item_id, prompt, response, provider.name)
    return CanonicalText(
        item_id=meta.item_id,
        mode="A",
        text=response,
        provenance=_render_transcript(prompt, response),
    )


def build_canonical_texts(
    metas: Iterable[ItemMetadata],
    mode: str = "NA",
    provider: Optional[SynopsisProvider] = None,
    transcript: Optional[TranscriptLog] = None,
    fallback_to_na: bool = False,
    workers: int = 1,
) -> List[CanonicalText]:
    """Canonical texts for a catalogue, in input order; A mode runs items concurrently."""
    metas = list(metas)
    if mode == "NA":
        return [canonical_text_na(meta) for meta in metas]
    if mode != "A":
        raise ArgumentError(f"unknown text mode '{mode}'")
    if provider is None:
        raise ArgumentError("A mode needs a synopsis provider")

    def run(meta: ItemMetadata) -> CanonicalText:
        return augment_synopsis(meta, provider, transcript, fallback_to_na)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        texts = list(pool.map(run, metas))
    fallbacks = sum(text.fallback for text in texts)
    logger.info(f"Augmented {len(texts) - fallbacks} item texts with '{provider.name}'" + (f", {fallbacks} fell back to NA" if fallbacks else ""))
    return texts


def write_texts(texts: Iterable[CanonicalText], path: Union[str, Path]):
    """Write canonical texts as JSON lines for an external encoder."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for text in texts:
            f.write(json.dumps(
                {"item_id": text.item_id, "mode": text.mode, "text": text.text, "fallback": text.fallback},
                ensure_ascii=False,
            ) + "\n")
