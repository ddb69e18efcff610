"""Print the normalised table, utilities and sums for the three-attack example and check them."""
import sys

from airs import worked_example

if __name__ == "__main__":
    report, failures = worked_example.run()
    print(report)
    for f in failures:
        print("MISMATCH", f, file=sys.stderr)
    sys.exit(3 if failures else 0)
