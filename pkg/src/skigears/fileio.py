"""Small file-writing helpers shared by the pipeline and the CLI."""

import hashlib
import os
import tempfile


def atomic_write_text(path, text):
    """Write text to path via a same-directory temp file plus rename, so a
    crash never leaves a partial artifact behind."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_key_value(path, mapping):
    """UTF-8 key=value lines, one per entry, written atomically."""
    atomic_write_text(path, "".join(f"{k}={v}\n" for k, v in mapping.items()))


def read_key_value(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, _, v = line.partition("=")
                out[k] = v
    return out


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
