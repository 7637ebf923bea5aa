"""Synopsis generation prompt."""

from dataclasses import dataclass
from typing import Sequence

from src.textprep.metadata import ItemMetadata

SYSTEM_PROMPT = "You are a helpful assistant."

USER_TEMPLATE = """Task: Write a vivid, engaging 100-150-word synopsis for a movie or artist.

Inputs:
- Title: {title}
- Genre List: {genres}
- Tags: {tags}"""


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str

    def as_messages(self):
        """Chat-completions message list."""
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user},
        ]


def _render_list(values: Sequence[str]) -> str:
    return ", ".join(values) if values else "[]"


def build_synopsis_prompt(meta: ItemMetadata) -> PromptPair:
    """Render the synopsis request for one item; a pure function of the metadata."""
    return PromptPair(
        system=SYSTEM_PROMPT,
        user=USER_TEMPLATE.format(
            title=meta.title,
            genres=_render_list(meta.genres),
            tags=_render_list(meta.tags),
        ),
    )
