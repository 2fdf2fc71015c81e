# 建立 errors.py → 錯誤類型
# 輸入錯誤、解析錯誤、一致性與內部不變量錯誤、準則拒絕


class InvalidInputError(ValueError):
    """輸入不合法：未知事件、未知狀態、字母表不符、覆蓋不足"""


class ParseError(InvalidInputError):
    """文字格式解析錯誤，帶有行號與欄位"""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        location = ''
        if line is not None:
            location = f"第 {line} 行"
            if column is not None:
                location += f"第 {column} 欄"
            location += ": "
        super().__init__(f"{location}{message}")


class ValidationError(ValueError):
    """結構不合法的機器、設定或資料序列"""


class ConsistencyError(RuntimeError):
    """標籤函數不可分解 (排列結果不一致、團隊與局部狀態追蹤不符)"""


class InvariantViolation(RuntimeError):
    """內部保證被破壞"""


class CriterionRejected(Exception):
    """
    分解準則不成立，訓練被拒絕

    result 保存 BisimResult (含反例序列)
    """

    def __init__(self, criterion, result):
        self.criterion = criterion
        self.result = result
        sequence = ' '.join(result.counterexample or ())
        super().__init__(f"{criterion} 分解準則不成立，反例: {sequence or 'ε'}")

    def __reduce__(self):
        # 跨程序傳遞 (ProcessPoolExecutor) 時以原始參數重建
        return type(self), (self.criterion, self.result)
