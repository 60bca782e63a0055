import hashlib
import json
import logging
import os
import tempfile
import unicodedata

logger = logging.getLogger(__name__)


def response_checker(response, context=""):
    """
    Checks the response status code and logs the appropriate message.

    Args:
        response (requests.Response): The response object.
        context (str, optional): The context in which the response is being checked. Defaults to "".

    Returns:
        int: The status code of the response.
    """
    reasons = {
        200: "Successful Request",
        400: "Bad Request",
        401: "Unauthorized",
        403: "Forbidden",
        404: "Not Found",
        408: "Request Timeout",
        429: "Too Many Requests",
        500: "Internal Server Error",
        502: "Bad Gateway",
        503: "Service Unavailable",
        504: "Gateway Timeout",
    }
    reason = reasons.get(response.status_code, response.reason)
    logger.debug(
        f"{context} - {reason}. Response Code: {response.status_code}, Response Text: {response.text[:200]}"
    )
    return response.status_code


def get_unique_key(input_data):
    """
    Generate a stable key based on the input data.

    Args:
        input_data (Union[dict, str]): The data to key. Dicts are keyed on their
            canonical JSON form, strings on their NFC form.

    Returns:
        str: SHA-256 hex digest.

    Raises:
        ValueError: If the input data is neither a dictionary nor a string.
    """
    if isinstance(input_data, dict):
        canonical = json.dumps(input_data, sort_keys=True, ensure_ascii=False)
    elif isinstance(input_data, str):
        canonical = unicodedata.normalize("NFC", input_data)
    else:
        raise ValueError("Input must be a dictionary or a string")
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dumps_line(obj):
    return json.dumps(obj, ensure_ascii=False)


def iter_jsonl(path):
    """Yield ``(line_number, text)`` for every non-blank line of a UTF-8 file."""
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            text = line.rstrip("\n")
            if text.strip():
                yield line_number, text


def write_jsonl(path, rows):
    """
    Write rows (dicts or pre-serialized strings) as JSONL.

    The file is written to a temporary sibling and renamed into place, so readers
    never see a half-written file.

    Returns:
        int: number of lines written.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    count = 0
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".jsonl")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(row if isinstance(row, str) else dumps_line(row))
                f.write("\n")
                count += 1
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {count} lines to {path}")
    return count
