"""Prompt template payloads.

Templates are fixed payloads; placeholders are substituted with str.replace
so braces occurring in user text pass through untouched.
"""

POINTWISE_TEMPLATE = """\
Text: {post}

Subject line: {subject_line}

Question: Is the above an excellent subject line for an email post of the given text?

An excellent subject line is coherent, informative, and engaging. We will send this email to our users hoping the users find it interesting and want to click on the email.

Answer with yes or no.

Answer:
"""

PAIRWISE_TEMPLATE = """\
Text: {post}

Subject line a: {subject_line_a}

Subject line b: {subject_line_b}

Question: Which subject line is more engaging for an email post?

An excellent subject line is coherent, informative, and engaging. We will send this email to our users hoping the users find it interesting and want to click on the email.

Answer with a or b.

Answer:
"""

POLICY_TEMPLATE = """\
We will send an email containing a post from a Nextdoor user. We want to use the most interesting part of the post as an email subject line.

Task description: Given a post, output the most interesting phrase in the post.

Post: {post}
"""

GENERATOR_SYSTEM_MESSAGE = (
    "You are an assistant that extracts the most interesting phrase from a post "
    "to be used as an email subject line."
)

GENERATOR_TEMPLATE = """\
We will send an email containing a post from a Nextdoor user. We want to use the most interesting part of the post as an email subject line.

Task description: Given a post, output the most interesting phrase in the post.

Here are the requirements:

1. Extract the phrase as-is. Do not change any single character.

2. Do not paraphrase. Copy the exact phrase. If the phrase you selected has stop words like "but", "and", "the", keep them in the output.

3. Do not insert or remove any word.

3. If you cannot choose the most interesting phrase, return the first 10 words of the post.

5. Try to keep it within 10 words. If you cannot complete within 10 words, generate an incomplete line with "..."

6. Put the most important words in the beginning.

7. If the first 10 words of the post contain unique and interesting words, reuse it.

8. Make a subject line that brings curiosity. If the subject line gets too long, cut the phrase before the last part. For example, if the post has "Yesterday, my son found a dog barking at other people", output "Yesterday, my son found a dog barking at ..."

9. If the first 10 words of the post contain informal words, you can keep these words in the subject line. We want to respect the post content in the subject line.

10. If the post has a phrase starting with "I" in the first 10 words, please use the same words in the subject line. It will make the subject line more personal. For example, if the post has "Hi All, I left my phone", use "I left my phone" in the subject line.

11. If the some part of the post is all capitals, it is okay to extract that part. That part is what user wanted to emphasize. For example, extract all capital phrases like "CRIME ALERT".

12. Do not use people's names in the subject line.

13. Do not add "Subject line:" in the output. Just output the content of the subject line.

14. Capitalize the first character of the subject line. If the part you selected starts with a lower-cased character, capitalize the character.

Post: {post}
"""


def render(template: str, **fields: str) -> str:
    """Substitute {name} placeholders literally (no escape processing)."""
    out = template
    for name, value in fields.items():
        out = out.replace("{" + name + "}", value)
    return out
