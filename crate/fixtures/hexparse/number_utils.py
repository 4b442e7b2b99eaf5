class NumberFormatException(Exception):
    pass


def isAllZeros(str):
    for ch in str:
        if ch not in "0123456789.eE+-":
            raise NumberFormatException(repr(str) + " is not a valid number.")
    digits = str.lstrip("+-")
    return all(ch in "0." for ch in digits)


def parseHex(str):
    negative = str.startswith("-")
    digits = str[3:] if negative else str[2:]
    if not digits or any(ch not in "0123456789abcdefABCDEF" for ch in digits):
        raise NumberFormatException(repr(str) + " is not a valid number.")
    value = int(digits, 16)
    return -value if negative else value


def parseDecimal(str):
    try:
        if any(ch in ".eE" for ch in str):
            return float(str)
        return int(str)
    except ValueError:
        raise NumberFormatException(repr(str) + " is not a valid number.")
