"""Prompt templates for the three LLM pipelines.

The templates are frozen; tests compare rendered prompts against golden
files byte-for-byte. Slots are <LANGUAGE>, <TITLE>, <DESCRIPTION>,
<OLD_KEYWORDS>, <TITLE_DESC>, <NEW_KEYWORDS>.
"""

from __future__ import annotations

TRANSLATE_SYSTEM = (
    "You are a professional translator specialized in translating bibliographic metadata."
)

TRANSLATE_USER = """\
Your task is to ensure that the given document title and description are in <LANGUAGE> language, translating the text if necessary. If the text is already in <LANGUAGE>, do not change or summarize it, keep it all as it is.

Respond with only the text, nothing else.

Give this title and description in <LANGUAGE>:

<TITLE>

<DESCRIPTION>"""

SYNTHESIZE_SYSTEM = "You are a professional metadata manager."

SYNTHESIZE_USER = """\
Your task is to create new bibliographic metadata: document titles and descriptions.

Here is an example document title and description in <LANGUAGE> with the following subject keywords: <OLD_KEYWORDS>

<TITLE_DESC>

Generate a new document title and description in <LANGUAGE>. Respond with only the title and description, nothing else. Create a new title and description that match the following subject keywords: <NEW_KEYWORDS>"""

# "intput" is intentional; the template is frozen as-is.
RANK_SYSTEM = (
    "You will be given text and a list of keywords to describe it. Your task is "
    "to score the keywords with a value between 0 and 100. The score value "
    "should depend on how well the keyword represents the text: a perfect "
    "keyword should have score 100 and completely unrelated keyword score "
    "0. You must output JSON with keywords as field names and add their scores "
    "as field values. "
    "There must be the same number of objects in the JSON as there are lines in "
    "the intput keyword list; do not skip scoring any keywords."
)

# Mapping used to fill the <LANGUAGE> slot from a language code; unknown
# codes pass through unchanged.
LANGUAGE_NAMES = {
    "de": "German",
    "en": "English",
}


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code, code)


def render_translate(language_code: str, title: str, description: str) -> tuple[str, str]:
    user = (
        TRANSLATE_USER.replace("<LANGUAGE>", language_name(language_code))
        .replace("<TITLE>", title)
        .replace("<DESCRIPTION>", description)
    )
    return TRANSLATE_SYSTEM, user


def render_synthesize(
    language_code: str,
    old_keywords: list[str],
    title_desc: str,
    new_keywords: list[str],
) -> tuple[str, str]:
    user = (
        SYNTHESIZE_USER.replace("<LANGUAGE>", language_name(language_code))
        .replace("<OLD_KEYWORDS>", ", ".join(old_keywords))
        .replace("<TITLE_DESC>", title_desc)
        .replace("<NEW_KEYWORDS>", ", ".join(new_keywords))
    )
    return SYNTHESIZE_SYSTEM, user


def render_rank(text: str, keywords: list[str]) -> tuple[str, str]:
    """User message: the document text, a blank line, then one keyword
    per line in candidate order."""
    user = text + "\n\n" + "\n".join(keywords)
    return RANK_SYSTEM, user
