"""RFC-4180 CSV writing with bit-stable float formatting."""
import csv
import io


def fmt(x) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(float(x), ".17g")


def render(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()
