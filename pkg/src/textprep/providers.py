"""Synopsis providers: a deterministic stub and two live LLM adapters."""

import re
from typing import Optional, Protocol, runtime_checkable

import anthropic
import httpx

from src.textprep.prompts import PromptPair
from src.utils.config import Config
from src.utils.errors import ArgumentError

_TITLE_LINE = re.compile(r"^- Title: (.*)$", re.MULTILINE)
_GENRE_LINE = re.compile(r"^- Genre List: (.*)$", re.MULTILINE)
_TAGS_LINE = re.compile(r"^- Tags: (.*)$", re.MULTILINE)


@runtime_checkable
class SynopsisProvider(Protocol):
    """Anything that turns a synopsis prompt into text."""

    name: str

    def generate(self, prompt: PromptPair) -> str:
        ...


class StubSynopsisProvider:
    """
    Offline provider that renders a template from the prompt's input lines.

    Identical prompts always produce identical output, so runs using it are
    reproducible and need no network.
    """

    name = "stub"

    def __init__(self, template: str = "SYNOPSIS({title})"):
        self.template = template

    def generate(self, prompt: PromptPair) -> str:
        title = _TITLE_LINE.search(prompt.user)
        genres = _GENRE_LINE.search(prompt.user)
        tags = _TAGS_LINE.search(prompt.user)
        return self.template.format(
            title=title.group(1) if title else "",
            genres=genres.group(1) if genres else "[]",
            tags=tags.group(1) if tags else "[]",
        )


class OpenRouterSynopsisProvider:
    """
    Chat-completions provider served by OpenRouter.
    Uses the model configured in OPENROUTER_MODEL unless one is given.
    """

    name = "openrouter"

    def __init__(self, model: Optional[str] = None, temperature: float = 0.0):
        """Initialize the OpenRouter client settings."""
        self.api_key = Config.OPENROUTER_API_KEY
        self.base_url = Config.OPENROUTER_BASE_URL
        self.model = model or Config.OPENROUTER_MODEL
        self.temperature = temperature
        self.timeout = Config.SYNOPSIS_TIMEOUT

    def generate(self, prompt: PromptPair) -> str:
        """
        Request one synopsis.

        Args:
            prompt: System and user messages

        Returns:
            The assistant message content

        Raises:
            httpx.HTTPError: On transport or HTTP status failures
            KeyError: When the response has no message content
        """
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }

        payload = {
            "model": self.model,
            "messages": prompt.as_messages(),
            "temperature": self.temperature,
            "max_tokens": Config.SYNOPSIS_MAX_TOKENS,
        }

        with httpx.Client(timeout=self.timeout) as client:
            response = client.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
            )
            response.raise_for_status()
            result = response.json()

        return result["choices"][0]["message"]["content"]


class AnthropicSynopsisProvider:
    """Messages-API provider; ANTHROPIC_BASE_URL points it at any compatible endpoint."""

    name = "anthropic"

    def __init__(self, model: Optional[str] = None):
        """Initialize the Anthropic client."""
        self.client = anthropic.Anthropic(
            api_key=Config.ANTHROPIC_API_KEY,
            base_url=Config.ANTHROPIC_BASE_URL,
            timeout=Config.SYNOPSIS_TIMEOUT,
        )
        self.model = model or Config.ANTHROPIC_MODEL

    def generate(self, prompt: PromptPair) -> str:
        response = self.client.messages.create(
            model=self.model,
            max_tokens=Config.SYNOPSIS_MAX_TOKENS,
            system=prompt.system,
            messages=[{"role": "user", "content": prompt.user}],
        )

        # Keep text blocks only
        text_parts = [block.text for block in response.content if getattr(block, "type", None) == "text"]
        return "\n\n".join(text_parts)


PROVIDERS = ("stub", "openrouter", "anthropic")


def make_provider(name: str, **kwargs) -> SynopsisProvider:
    """Instantiate a provider by name, validating its API keys first."""
    if name not in PROVIDERS:
        raise ArgumentError(f"unknown synopsis provider '{name}' (allowed: {', '.join(PROVIDERS)})")
    Config.validate(name)
    if name == "stub":
        return StubSynopsisProvider(**kwargs)
    if name == "openrouter":
        return OpenRouterSynopsisProvider(**kwargs)
    return AnthropicSynopsisProvider(**kwargs)
