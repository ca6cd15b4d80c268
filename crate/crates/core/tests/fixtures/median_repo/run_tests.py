"""Runs one test given as path/to/test_file.py::test_function.

Exit status: 0 passed, 1 failed, 2 the test could not be collected.
"""
import importlib.util
import sys
import traceback

sys.dont_write_bytecode = True


def main(argv):
    if len(argv) != 2 or "::" not in argv[1]:
        print("usage: run_tests.py path/to/test_file.py::test_name")
        return 2
    path, name = argv[1].split("::", 1)
    sys.path.insert(0, ".")
    try:
        spec = importlib.util.spec_from_file_location("_under_test", path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
    except Exception:
        print("ERROR collecting " + path)
        traceback.print_exc(file=sys.stdout)
        return 2
    func = getattr(module, name, None)
    if func is None:
        print("ERROR collecting {}: no test named {}".format(path, name))
        return 2
    try:
        func()
    except Exception:
        traceback.print_exc(file=sys.stdout)
        print("FAILED " + argv[1])
        return 1
    print("PASSED " + argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
