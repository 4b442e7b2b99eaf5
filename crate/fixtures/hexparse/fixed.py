def createNumber(str):
    if str is None:
        return None
    if str.startswith(("0x", "0X", "-0x", "-0X")):
        return parseHex(str)
    if isAllZeros(str):
        return 0
    return parseDecimal(str)
