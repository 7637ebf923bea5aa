"""Environment configuration for live synopsis providers and logging."""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Configuration class for managing API keys and settings."""

    # OpenRouter API Configuration
    OPENROUTER_API_KEY = os.getenv("OPENROUTER_API_KEY")
    OPENROUTER_BASE_URL = os.getenv("OPENROUTER_BASE_URL", "https://openrouter.ai/api/v1")
    OPENROUTER_MODEL = os.getenv("OPENROUTER_MODEL", "openai/gpt-4o-mini")

    # Anthropic-compatible API Configuration
    ANTHROPIC_API_KEY = os.getenv("ANTHROPIC_API_KEY")
    ANTHROPIC_BASE_URL = os.getenv("ANTHROPIC_BASE_URL")
    ANTHROPIC_MODEL = os.getenv("ANTHROPIC_MODEL", "claude-haiku-4-5")

    # Provider request settings
    SYNOPSIS_TIMEOUT = float(os.getenv("MMBENCH_SYNOPSIS_TIMEOUT", "60"))
    SYNOPSIS_MAX_TOKENS = int(os.getenv("MMBENCH_SYNOPSIS_MAX_TOKENS", "400"))

    LOG_LEVEL = os.getenv("MMBENCH_LOG_LEVEL", "INFO")

    REQUIRED_KEYS = {
        "openrouter": ("OPENROUTER_API_KEY",),
        "anthropic": ("ANTHROPIC_API_KEY",),
        "stub": (),
    }

    @classmethod
    def validate(cls, provider: str = "stub"):
        """Validate that the API keys needed by a synopsis provider are set."""
        if provider not in cls.REQUIRED_KEYS:
            raise ValueError(
                f"Unknown synopsis provider '{provider}'. "
                f"Allowed: {', '.join(sorted(cls.REQUIRED_KEYS))}."
            )

        missing = [key for key in cls.REQUIRED_KEYS[provider] if not getattr(cls, key)]

        if missing:
            raise ValueError(
                f"Missing required API keys: {', '.join(missing)}. "
                f"Please set them in your .env file."
            )

        return True
