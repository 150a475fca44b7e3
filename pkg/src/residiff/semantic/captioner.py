"""Caption residual retrieval: deterministic mock and HTTP client.

The mock implements a word-level set difference: it keeps, in order, the
full-caption words whose normalized form does not occur in the decoded
caption, capitalizes the first survivor, and closes with a period when the
full caption ended in one. Captions that agree word-for-word (and generally
any caption fully covered by the decoded one) produce the empty string.

The HTTP client speaks a plain text-completion contract: the filled prompt
template is POSTed verbatim as UTF-8 and the response body is the caption
string. A bearer token is read from RESIDIFF_CAPTIONER_TOKEN when present.
Transport errors and non-success statuses surface immediately; there are no
silent retries.
"""

from __future__ import annotations

import os
import string
import urllib.error
import urllib.request
from dataclasses import dataclass

from ..errors import CaptionerError

TOKEN_ENV_VAR = "RESIDIFF_CAPTIONER_TOKEN"

FULL_CAPTION_PROMPT = (
    "Please describe this picture in detail with 40 words. "
    "Do not provide any description about feelings."
)

RESIDUAL_PROMPT = (
    "Original Image: '{caption_x}'; "
    "Compressed Image: '{caption_x_dec}'. "
    "Provide information that is in the original image but not included in "
    "or mismatch with the compressed image. Don't include information that "
    "is already in the compressed image. Please use most compact words. Do "
    "not include the description for the compressed image. For example: if "
    "input is Original Image: A red barn surrounded by trees, reflected in "
    "a pond. Compressed Image: red house surrounded by trees. Residual "
    "caption is : A barn reflected in a pond. Please refer to this to "
    "output. Do not appear words like 'compressed image', 'original image' "
    "and 'The semantic residual is'. If you think that the two descriptions "
    "mean almost the same thing, please output an empty string. "
)


def fill_residual_prompt(caption_full: str, caption_decoded: str) -> str:
    return RESIDUAL_PROMPT.format(
        caption_x=caption_full, caption_x_dec=caption_decoded
    )


def _normalize_word(word: str) -> str:
    return word.strip(string.punctuation).lower()


@dataclass(frozen=True)
class MockCaptioner:
    """Pure word-set-difference captioner; identical inputs, identical outputs."""

    kind: str = "mock"

    def residual_caption(self, caption_full: str, caption_decoded: str) -> str:
        decoded_words = {
            _normalize_word(w) for w in caption_decoded.split() if _normalize_word(w)
        }
        kept = []
        for word in caption_full.split():
            bare = _normalize_word(word)
            if bare and bare not in decoded_words:
                kept.append(bare)
        if not kept:
            return ""
        sentence = " ".join(kept)
        sentence = sentence[0].upper() + sentence[1:]
        if caption_full.rstrip().endswith("."):
            sentence += "."
        return sentence


@dataclass(frozen=True)
class HttpCaptioner:
    """Blocking text-completion client over HTTP(S)."""

    endpoint: str
    timeout: float = 30.0
    kind: str = "http"

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "text/plain; charset=utf-8"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(
            self.endpoint, data=prompt.encode("utf-8"), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                status = getattr(response, "status", 200)
                if not 200 <= status < 300:
                    raise CaptionerError(f"captioner endpoint returned status {status}")
                return response.read().decode("utf-8").strip()
        except urllib.error.HTTPError as exc:
            raise CaptionerError(f"captioner endpoint returned status {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise CaptionerError(f"captioner request failed: {exc}") from exc

    def residual_caption(self, caption_full: str, caption_decoded: str) -> str:
        return self.complete(fill_residual_prompt(caption_full, caption_decoded))


def srr_residual(caption_full: str, caption_decoded: str, client) -> str:
    """Residual caption: content of the full caption missing from the decoded one."""
    return client.residual_caption(caption_full, caption_decoded)
