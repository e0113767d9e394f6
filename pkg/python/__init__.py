# Python package marker for the KatoFlow modules and command-line interface.
