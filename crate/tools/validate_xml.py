#!/usr/bin/env python3
"""Validate XML documents against an XSD. Usage: validate_xml.py SCHEMA DOC..."""
import sys

import xmlschema


def main():
    schema = xmlschema.XMLSchema(sys.argv[1])
    failed = 0
    for doc in sys.argv[2:]:
        errors = list(schema.iter_errors(doc))
        for e in errors:
            print(f"{doc}: {e.reason}")
        failed += bool(errors)
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
